#include "uadce/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <optional>
#include <set>

#include "uadce/container.hpp"
#include "uadce/error.hpp"
#include "uadce/report.hpp"

namespace uadce {

using nlohmann::json;

double performance_drop(double first_acc, double last_acc) { return first_acc - last_acc; }

double average_accuracy(const std::vector<double>& accs) {
  if (accs.empty()) throw_contract("average_accuracy needs at least one session");
  double sum = 0.0;
  for (double a : accs) sum += a;
  return sum / static_cast<double>(accs.size());
}

namespace {

std::string now_utc_string() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void phase_record(Auditor* audit, int session, const std::string& phase, const char* status,
                  const json& extra) {
  if (!audit || !audit->sessions) return;
  json line{{"session", session}, {"phase", phase}, {"status", status}};
  if (extra.is_object()) line.update(extra);
  audit->sessions->write(line);
}

// Runs one phase body (returning its stats object) and writes the phase line
// whether the body finished or threw.
template <typename F>
void run_phase(Auditor* audit, int session, const std::string& phase, F&& body) {
  try {
    json extra = body();
    phase_record(audit, session, phase, "done", extra);
  } catch (const std::exception& e) {
    phase_record(audit, session, phase, "error", json{{"error", e.what()}});
    throw;
  }
}

BackboneSpec backbone_spec(const ExperimentConfig& config, int input_dim) {
  BackboneSpec bs;
  bs.kind = config.backbone_kind;
  bs.input_dim = input_dim;
  bs.hidden = config.hidden;
  bs.feature_dim = config.feature_dim;
  bs.activation = config.activation;
  bs.image_side = config.image_side;
  bs.channels = config.channels;
  if (bs.kind == "conv" && bs.image_side * bs.image_side != input_dim)
    throw_config("backbone.image_side squared (" +
                 std::to_string(bs.image_side * bs.image_side) +
                 ") does not match the dataset dimension " + std::to_string(input_dim));
  return bs;
}

std::vector<LabeledExample> examples_for(const DatasetManifest& manifest,
                                         const std::vector<int64_t>& ids) {
  std::vector<LabeledExample> out;
  out.reserve(ids.size());
  for (int64_t id : ids) {
    const Sample& s = manifest.sample(id);
    out.push_back({s.input.data(), s.class_id});
  }
  return out;
}

// Exemplars train under their stored class, which for pseudo-labeled items is
// the pseudo label, not ground truth.
std::vector<LabeledExample> exemplar_examples(const ExemplarSet& memory,
                                              const DatasetManifest& manifest) {
  std::vector<LabeledExample> out;
  out.reserve(memory.total());
  for (const auto& [cls, list] : memory.classes)
    for (const Exemplar& e : list)
      out.push_back({manifest.sample(e.sample_id).input.data(), cls});
  return out;
}

std::vector<MemoryCandidate> memory_candidates(const DatasetManifest& manifest,
                                               const std::vector<int64_t>& ids) {
  std::vector<MemoryCandidate> out;
  out.reserve(ids.size());
  for (int64_t id : ids) {
    const Sample& s = manifest.sample(id);
    out.push_back({id, s.class_id, s.input.data(), Provenance::Labeled});
  }
  return out;
}

struct EpochRun {
  Model* model = nullptr;
  const Model* reference = nullptr;  // null: plain cross-entropy phase
  const std::vector<const double*>* refined = nullptr;
  double zeta = 0.0;
  Sgd* sgd = nullptr;
  int session = 0;
  int* epoch_counter = nullptr;  // shared across the session's phases
  const char* phase = "";
};

// The one training loop everybody uses. Each epoch reshuffles with a
// generator derived from (seed, session, running epoch counter), so a phase's
// randomness does not depend on how earlier phases consumed their draws.
// With labeled_first the secondary group (pseudo-labeled picks) trails the
// primary group inside every epoch; batches are cut across the concatenation.
double run_epochs(const ExperimentConfig& config, EpochRun& run,
                  const std::vector<LabeledExample>& primary,
                  const std::vector<LabeledExample>& secondary, int epochs,
                  const std::vector<int>& lr_milestones) {
  static const std::vector<const double*> kNoRefined;
  const std::vector<const double*>& refined =
      (run.reference && run.refined) ? *run.refined : kNoRefined;
  const size_t batch_size = static_cast<size_t>(config.batch_size);
  double last = 0.0;
  for (int e = 1; e <= epochs; ++e) {
    for (int milestone : lr_milestones)
      if (milestone == e) run.sgd->set_lr(run.sgd->lr() * config.lr_decay_rate);
    rng::Rng order_rng(rng::derive_seed(config.seed, "shuffle", static_cast<uint64_t>(run.session),
                                        static_cast<uint64_t>((*run.epoch_counter)++)));
    std::vector<LabeledExample> order;
    order.reserve(primary.size() + secondary.size());
    if (config.labeled_first) {
      std::vector<LabeledExample> a = primary;
      std::vector<LabeledExample> b = secondary;
      order_rng.shuffle(a);
      order_rng.shuffle(b);
      order.insert(order.end(), a.begin(), a.end());
      order.insert(order.end(), b.begin(), b.end());
    } else {
      order.insert(order.end(), primary.begin(), primary.end());
      order.insert(order.end(), secondary.begin(), secondary.end());
      order_rng.shuffle(order);
    }
    double total = 0.0;
    int batches = 0;
    for (size_t off = 0; off < order.size(); off += batch_size) {
      size_t end = std::min(off + batch_size, order.size());
      std::vector<LabeledExample> batch(order.begin() + static_cast<ptrdiff_t>(off),
                                        order.begin() + static_cast<ptrdiff_t>(end));
      run.sgd->zero_grad();
      LossBreakdown lb = session_loss(*run.model, run.reference, batch, refined, run.zeta,
                                      config.temperature, true);
      if (!std::isfinite(lb.total))
        throw_training(std::string(run.phase) + " loss is not finite at epoch " +
                       std::to_string(e) + " of session " + std::to_string(run.session));
      run.sgd->step();
      total += lb.total;
      ++batches;
    }
    if (batches > 0) last = total / batches;
  }
  return last;
}

// Prototype members: the exemplar memory, plus the session's labeled samples
// unless the config restricts evaluation to exemplars only. Duplicates (a
// labeled sample that herding also kept) count once.
std::map<int, std::vector<const double*>> prototype_members(
    const ExemplarSet& memory, const DatasetManifest& manifest,
    const std::vector<int64_t>& session_labeled, bool exemplars_only) {
  std::map<int, std::vector<const double*>> members;
  std::set<int64_t> used;
  for (const auto& [cls, list] : memory.classes)
    for (const Exemplar& e : list) {
      members[cls].push_back(manifest.sample(e.sample_id).input.data());
      used.insert(e.sample_id);
    }
  if (!exemplars_only)
    for (int64_t id : session_labeled)
      if (used.insert(id).second) {
        const Sample& s = manifest.sample(id);
        members[s.class_id].push_back(s.input.data());
      }
  return members;
}

SessionMetrics evaluate_session(const ExperimentConfig& config, const SessionStream& stream,
                                int session_index, const Model& model,
                                const ExemplarSet& memory) {
  const SessionSpec& session = stream.sessions[static_cast<size_t>(session_index - 1)];
  auto members = prototype_members(memory, stream.manifest, session.labeled,
                                   config.prototypes_exemplars_only);
  PrototypeTable prototypes = compute_prototypes(model, members, config.normalize_features);
  std::vector<const Sample*> test;
  test.reserve(session.test.size());
  for (int64_t id : session.test) test.push_back(&stream.manifest.sample(id));
  const std::vector<int>& base = stream.sessions.front().class_ids;
  std::vector<int> novel;
  for (int s = 1; s < session_index; ++s) {
    const std::vector<int>& ids = stream.sessions[static_cast<size_t>(s)].class_ids;
    novel.insert(novel.end(), ids.begin(), ids.end());
  }
  EvalOptions opts;
  opts.normalize = config.normalize_features;
  opts.head_metrics = config.ablation == Ablation::CnnHead;
  SessionMetrics m = evaluate(model, prototypes, test, base, novel, opts);
  m.session_index = session_index;
  return m;
}

void merge_lambdas(ExemplarSet& memory, const std::vector<RefinementEntry>& audit) {
  for (const RefinementEntry& entry : audit) {
    auto it = memory.classes.find(entry.exemplar.class_id);
    if (it == memory.classes.end()) continue;
    for (Exemplar& e : it->second)
      if (e.sample_id == entry.exemplar.sample_id) {
        e.uncertainty = entry.lambda;
        break;
      }
  }
}

json counts_json(const std::map<int, int>& counts) {
  json o = json::object();
  for (const auto& [k, v] : counts) o[std::to_string(k)] = v;
  return o;
}

json confidences_json(const std::map<int, double>& values) {
  json o = json::object();
  for (const auto& [k, v] : values) o[std::to_string(k)] = v;
  return o;
}

json iteration_json(int session, const IterationRecord& rec) {
  return json{{"session", session},
              {"iteration", rec.iteration},
              {"candidates", counts_json(rec.candidate_counts)},
              {"selected", counts_json(rec.selected_counts)},
              {"min_confidence", confidences_json(rec.min_confidence)},
              {"mean_confidence", confidences_json(rec.mean_confidence)},
              {"pool_remaining", rec.pool_remaining}};
}

}  // namespace

SessionMetrics evaluate(const Model& model, const PrototypeTable& prototypes,
                        const std::vector<const Sample*>& test_set,
                        const std::vector<int>& base_classes,
                        const std::vector<int>& novel_classes, const EvalOptions& opts) {
  if (test_set.empty()) throw_evaluation("test set is empty");
  for (const Sample* s : test_set)
    if (!prototypes.count(s->class_id))
      throw_evaluation("no prototype for test class " + std::to_string(s->class_id));
  std::set<int> base(base_classes.begin(), base_classes.end());
  std::set<int> novel(novel_classes.begin(), novel_classes.end());

  int hits = 0, base_total = 0, base_hits = 0, novel_total = 0, novel_hits = 0;
  int head_hits = 0, head_base_hits = 0, head_novel_hits = 0;
  std::vector<double> feat;
  for (const Sample* s : test_set) {
    model.extract_features(s->input.data(), feat);
    int pred = nme_classify(feat, prototypes, opts.normalize);
    bool hit = pred == s->class_id;
    bool is_base = base.count(s->class_id) > 0;
    bool is_novel = novel.count(s->class_id) > 0;
    hits += hit;
    if (is_base) {
      ++base_total;
      base_hits += hit;
    }
    if (is_novel) {
      ++novel_total;
      novel_hits += hit;
    }
    if (opts.head_metrics) {
      // Head rows follow global class ids: classes enter the stream in
      // ascending id order and the head grows by appending.
      std::vector<double> lg = model.logits(s->input.data());
      int arg = 0;
      for (int k = 1; k < static_cast<int>(lg.size()); ++k)
        if (lg[static_cast<size_t>(k)] > lg[static_cast<size_t>(arg)]) arg = k;
      bool head_hit = arg == s->class_id;
      head_hits += head_hit;
      if (is_base) head_base_hits += head_hit;
      if (is_novel) head_novel_hits += head_hit;
    }
  }

  SessionMetrics m;
  m.overall_acc = 100.0 * hits / static_cast<double>(test_set.size());
  m.base_acc = base_total > 0 ? 100.0 * base_hits / base_total : 0.0;
  if (novel_total > 0) m.novel_acc = 100.0 * novel_hits / novel_total;
  if (opts.head_metrics) {
    m.head_overall = 100.0 * head_hits / static_cast<double>(test_set.size());
    m.head_base = base_total > 0 ? 100.0 * head_base_hits / base_total : 0.0;
    if (novel_total > 0) m.head_novel = 100.0 * head_novel_hits / novel_total;
  }
  m.test_count = static_cast<int>(test_set.size());
  m.timestamp = now_utc_string();
  return m;
}

std::vector<double> base_feature_scale(const DatasetManifest& manifest,
                                       const SessionSpec& session_1) {
  if (session_1.labeled.empty()) throw_contract("base session has no labeled data");
  const size_t dim = static_cast<size_t>(manifest.dimension);
  std::vector<double> mean(dim, 0.0), sq(dim, 0.0);
  for (int64_t id : session_1.labeled) {
    const Sample& s = manifest.sample(id);
    for (size_t d = 0; d < dim; ++d) {
      mean[d] += s.input[d];
      sq[d] += s.input[d] * s.input[d];
    }
  }
  const double n = static_cast<double>(session_1.labeled.size());
  std::vector<double> out(dim, 0.0);
  for (size_t d = 0; d < dim; ++d) {
    double var = sq[d] / n - (mean[d] / n) * (mean[d] / n);
    out[d] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  return out;
}

BaseResult train_base_session(const ExperimentConfig& config, const DatasetManifest& manifest,
                              const SessionSpec& session_1, Auditor* audit) {
  if (session_1.index != 1) throw_contract("train_base_session expects the stream's first session");
  if (session_1.labeled.empty()) throw_contract("base session has no labeled data");

  BackboneSpec bs = backbone_spec(config, manifest.dimension);
  std::optional<Model> built;
  run_phase(audit, 1, "init", [&] {
    rng::Rng init(rng::derive_seed(config.seed, "init", 1));
    built.emplace(make_backbone(bs, init), static_cast<int>(session_1.class_ids.size()), init);
    return json{{"classes", built->known_classes()}, {"feature_dim", built->feature_dim()}};
  });
  Model& model = *built;

  int epoch_counter = 0;
  run_phase(audit, 1, "train", [&] {
    Sgd sgd(model.trainable_params(), config.base_lr, config.momentum, config.weight_decay);
    EpochRun run;
    run.model = &model;
    run.sgd = &sgd;
    run.session = 1;
    run.epoch_counter = &epoch_counter;
    run.phase = "base";
    std::vector<LabeledExample> examples = examples_for(manifest, session_1.labeled);
    double last =
        run_epochs(config, run, examples, {}, config.base_epochs, config.lr_decay_epochs);
    return json{{"epochs", config.base_epochs}, {"last_loss", last}};
  });

  ExemplarSet memory;
  run_phase(audit, 1, "memory", [&] {
    ExemplarSet empty;
    empty.per_class_budget = config.memory_per_class;
    memory = update_exemplars(empty, memory_candidates(manifest, session_1.labeled), {}, model,
                              config.memory_policy, rng::derive_seed(config.seed, "memory", 1));
    return json{{"classes", memory.classes.size()}, {"total", memory.total()}};
  });

  model.freeze_front_layers(config.freeze_groups);
  return {std::move(model), std::move(memory)};
}

IncrementalResult run_incremental_session(const ExperimentConfig& config,
                                          const SessionStream& stream, int session_index,
                                          const Model& reference, const ExemplarSet& memory,
                                          const std::vector<double>& feature_scale,
                                          Auditor* audit) {
  if (session_index < 2 || session_index > static_cast<int>(stream.sessions.size()))
    throw_contract("incremental session index " + std::to_string(session_index) +
                   " out of range");
  if (memory.classes.empty()) throw_contract("incremental session needs a nonempty memory");
  const SessionSpec& session = stream.sessions[static_cast<size_t>(session_index - 1)];
  const DatasetManifest& manifest = stream.manifest;
  const int i = session_index;
  const auto t0 = std::chrono::steady_clock::now();

  Model model(reference);
  run_phase(audit, i, "expand", [&] {
    rng::Rng init(rng::derive_seed(config.seed, "init", static_cast<uint64_t>(i)));
    model.expand_head(static_cast<int>(session.class_ids.size()), init);
    return json{{"classes", model.known_classes()}};
  });

  // One optimizer per session, created after expansion so the new head rows
  // are tracked from their first step.
  int epoch_counter = 0;
  Sgd sgd(model.trainable_params(), config.incremental_lr, config.momentum, config.weight_decay);
  std::vector<LabeledExample> labeled_examples = examples_for(manifest, session.labeled);

  run_phase(audit, i, "supervised", [&] {
    std::vector<LabeledExample> primary = exemplar_examples(memory, manifest);
    primary.insert(primary.end(), labeled_examples.begin(), labeled_examples.end());
    EpochRun run;
    run.model = &model;
    run.sgd = &sgd;
    run.session = i;
    run.epoch_counter = &epoch_counter;
    run.phase = "supervised";
    double last = run_epochs(config, run, primary, {}, config.supervised_epochs, {});
    return json{{"epochs", config.supervised_epochs}, {"last_loss", last}};
  });

  ExemplarSet merged = memory;  // carries the fresh lambdas into the update
  RefinementResult refinement;
  run_phase(audit, i, "refine", [&] {
    if (config.ablation == Ablation::NoUad) {
      // Standard-distillation baseline: the full memory distills, unranked.
      refinement.refined = memory;
      return json{{"mode", "standard"}, {"kept", memory.total()}, {"of", memory.total()}};
    }
    UncertaintySpec uspec;
    uspec.pass_count = config.noise_passes;
    uspec.noise_scale = config.noise_scale;
    uspec.feature_scale = feature_scale;
    InputResolver resolve = [&manifest](const Exemplar& e) {
      return manifest.sample(e.sample_id).input.data();
    };
    refinement = refine_exemplars(memory, reference, config.keep_fraction, uspec,
                                  rng::derive_seed(config.seed, "session", static_cast<uint64_t>(i)),
                                  resolve, config.eq5_literal);
    merge_lambdas(merged, refinement.audit);
    if (audit && audit->refinement) {
      int rank = 0;
      for (const RefinementEntry& entry : refinement.audit)
        audit->refinement->write(
            json{{"session", i},
                 {"rank", rank++},
                 {"sample", entry.exemplar.sample_id},
                 {"class", entry.exemplar.class_id},
                 {"provenance",
                  entry.exemplar.provenance == Provenance::Pseudo ? "pseudo" : "labeled"},
                 {"lambda", entry.lambda},
                 {"kept", entry.kept}});
    }
    return json{{"kept", refinement.refined.total()}, {"of", memory.total()}};
  });

  AdaptiveWeight weight;
  run_phase(audit, i, "weight", [&] {
    if (config.ablation == Ablation::NoUad) {
      weight = {1.0, 1.0, 1.0, 1.0};
    } else if (config.ablation == Ablation::NoAw) {
      weight = {config.zeta_base, 1.0, 1.0, config.zeta_base};
    } else if (config.zeta_base == 0.0) {
      weight = {0.0, 1.0, 1.0, 0.0};  // distillation disabled
    } else {
      weight = adaptive_weight(config.zeta_base, static_cast<int64_t>(memory.total()),
                               static_cast<int64_t>(refinement.refined.total()),
                               reference.known_classes(),
                               static_cast<int>(session.class_ids.size()));
    }
    return json{{"zeta", weight.zeta},
                {"zeta_base", weight.zeta_base},
                {"exemplar_ratio", weight.exemplar_ratio},
                {"class_ratio", weight.class_ratio}};
  });

  std::vector<const double*> refined_inputs;
  refined_inputs.reserve(refinement.refined.total());
  for (const auto& [cls, list] : refinement.refined.classes)
    for (const Exemplar& e : list) refined_inputs.push_back(manifest.sample(e.sample_id).input.data());

  std::vector<PseudoItem> selections;
  std::vector<IterationRecord> records;
  run_phase(audit, i, "unlabeled", [&] {
    if (!config.equilibrium_enabled) return json{{"skipped", true}};

    SelectionPolicy policy;
    policy.gamma = config.gamma;
    policy.iteration_budget = config.iteration_budget;
    policy.iterations = config.iterations;
    policy.mode =
        config.ablation == Ablation::NoCe ? SelectionMode::Plain : config.selection_mode;
    policy.proportions = config.proportions;

    std::vector<PoolItem> pool;
    pool.reserve(session.unlabeled.size());
    for (int64_t id : session.unlabeled) pool.push_back({id, manifest.sample(id).input.data()});

    std::vector<LabeledExample> primary = labeled_examples;
    {
      std::vector<LabeledExample> refined_examples =
          exemplar_examples(refinement.refined, manifest);
      primary.insert(primary.end(), refined_examples.begin(), refined_examples.end());
    }

    size_t written = 0;
    auto flush = [&] {
      if (audit && audit->selection)
        for (; written < records.size(); ++written)
          audit->selection->write(iteration_json(i, records[written]));
      else
        written = records.size();
    };

    TrainStepFn step = [&](const std::vector<PseudoItem>& cumulative, int iteration) {
      flush();  // the selection record precedes its training passes
      (void)iteration;
      std::vector<LabeledExample> pseudo;
      pseudo.reserve(cumulative.size());
      for (const PseudoItem& item : cumulative)
        pseudo.push_back({manifest.sample(item.id).input.data(), item.label});
      EpochRun run;
      run.model = &model;
      run.reference = &reference;
      run.refined = &refined_inputs;
      run.zeta = weight.zeta;
      run.sgd = &sgd;
      run.session = i;
      run.epoch_counter = &epoch_counter;
      run.phase = "unlabeled";
      run_epochs(config, run, primary, pseudo, config.extra_epochs, {});
    };

    selections =
        run_unlabeled_iterations(model, std::move(pool), session.class_ids, policy, step, &records);
    flush();
    return json{{"iterations", records.size()},
                {"selected", selections.size()},
                {"pool", session.unlabeled.size()}};
  });

  ExemplarSet new_memory;
  run_phase(audit, i, "memory", [&] {
    std::vector<MemoryCandidate> labeled_cands = memory_candidates(manifest, session.labeled);
    std::vector<MemoryCandidate> pseudo_cands;
    if (config.pseudo_in_memory) {
      pseudo_cands.reserve(selections.size());
      for (const PseudoItem& item : selections)
        pseudo_cands.push_back(
            {item.id, item.label, manifest.sample(item.id).input.data(), Provenance::Pseudo});
    }
    new_memory = update_exemplars(merged, labeled_cands, pseudo_cands, model,
                                  config.memory_policy,
                                  rng::derive_seed(config.seed, "memory", static_cast<uint64_t>(i)));
    return json{{"classes", new_memory.classes.size()}, {"total", new_memory.total()}};
  });

  SessionMetrics metrics;
  run_phase(audit, i, "evaluate", [&] {
    metrics = evaluate_session(config, stream, i, model, new_memory);
    return json{{"overall", metrics.overall_acc}};
  });
  metrics.wall_time = seconds_since(t0);

  return {std::move(model), std::move(new_memory), std::move(metrics), std::move(selections),
          weight};
}

namespace {

DatasetManifest build_manifest(const ExperimentConfig& config) {
  if (config.dataset_kind == "synthetic") {
    SyntheticSpec spec;
    spec.class_count = config.classes;
    spec.samples_per_class = config.samples_per_class;
    spec.dimension = config.dimension;
    spec.separation = config.separation;
    spec.seed = rng::derive_seed(config.seed, "data");
    return synthetic_manifest(spec);
  }
  if (config.dataset_kind == "columnar") return load_columnar(config.dataset_path);
  if (config.dataset_kind == "directory") return load_directory(config.dataset_path);
  throw_config("dataset.kind must be synthetic, columnar or directory");
}

ProtocolConfig protocol_config(const ExperimentConfig& config) {
  ProtocolConfig pc;
  pc.base_class_count = config.base_classes;
  pc.n_way = config.n_way;
  pc.k_shot = config.k_shot;
  pc.session_count = config.sessions;
  pc.unlabeled_pool_size = config.unlabeled_per_session;
  pc.seed = rng::derive_seed(config.seed, "protocol");
  pc.train_fraction = config.train_fraction;
  pc.cross_session_distractors = config.cross_session_distractors;
  return pc;
}

void save_checkpoint(const std::string& path, Model& model, const ExemplarSet& memory,
                     const DatasetManifest& manifest, const ExperimentConfig& config,
                     const std::vector<SessionMetrics>& metrics, int session_index) {
  Container c;
  json mj = json::array();
  for (const SessionMetrics& m : metrics) mj.push_back(session_metrics_json(m));
  c.meta["run"] = {{"name", config.name},
                   {"seed", config.seed},
                   {"session", session_index},
                   {"ablation", ablation_name(config.ablation)},
                   {"metrics", mj}};
  save_model(c, model);
  save_exemplars(c, memory, manifest);
  c.save(path);
}

struct ResumeState {
  Model model;
  ExemplarSet memory;
  std::vector<SessionMetrics> metrics;
  int session = 0;
};

ResumeState load_checkpoint(const std::string& path, const ExperimentConfig& config,
                            const DatasetManifest& manifest) {
  Container c = Container::load(path);
  if (!c.meta.contains("run")) throw_io(path + ": not a run checkpoint");
  const json& run = c.meta["run"];
  uint64_t seed = run.value("seed", uint64_t{0});
  if (seed != config.seed)
    throw_io("checkpoint seed " + std::to_string(seed) + " does not match config seed " +
             std::to_string(config.seed));
  ResumeState st{load_model(c), load_exemplars(c, manifest), {}, run.value("session", 0)};
  for (const json& m : run.value("metrics", json::array()))
    st.metrics.push_back(session_metrics_from_json(m));
  if (st.session < 1 || static_cast<int>(st.metrics.size()) != st.session)
    throw_io(path + ": checkpoint session bookkeeping is inconsistent");
  return st;
}

void finalize_summary(RunReport& report) {
  std::vector<double> overall;
  overall.reserve(report.sessions.size());
  for (const SessionMetrics& m : report.sessions) overall.push_back(m.overall_acc);
  report.pd = performance_drop(overall.front(), overall.back());
  report.average_acc = average_accuracy(overall);
}

void write_artifacts(const RunReport& report, const std::filesystem::path& out) {
  write_metrics_csv(report, (out / "metrics.csv").string());
  write_report_json(report, (out / "report.json").string());
  write_accuracy_svg(report, (out / "accuracy.svg").string());
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const std::string& resume_checkpoint) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path out(config.output_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw_io("cannot create output directory " + config.output_dir + ": " + ec.message());

  SessionStream stream = build_benchmark(build_manifest(config), protocol_config(config));
  write_stream_index(stream, (out / "stream_index.json").string());
  std::vector<double> feature_scale = base_feature_scale(stream.manifest, stream.sessions.front());

  JsonlWriter sessions_log((out / "sessions.jsonl").string());
  JsonlWriter selection_log((out / "selection.jsonl").string());
  JsonlWriter refinement_log((out / "refinement.jsonl").string());
  Auditor auditor{&sessions_log, &selection_log, &refinement_log};

  RunReport report;
  report.name = config.name;
  report.seed = config.seed;
  report.ablation = config.ablation;
  report.output_dir = config.output_dir;
  report.audit_files = {"sessions.jsonl", "selection.jsonl", "refinement.jsonl"};
  report.config_snapshot = config_json(config);

  if (config.checkpoints_enabled) {
    fs::create_directories(out / "checkpoints", ec);
    if (ec) throw_io("cannot create checkpoint directory: " + ec.message());
  }

  std::optional<Model> model;
  ExemplarSet memory;
  int start = 1;
  if (!resume_checkpoint.empty()) {
    ResumeState st = load_checkpoint(resume_checkpoint, config, stream.manifest);
    if (st.session > static_cast<int>(stream.sessions.size()))
      throw_io("checkpoint session " + std::to_string(st.session) +
               " exceeds the stream's session count");
    model.emplace(std::move(st.model));
    memory = std::move(st.memory);
    report.sessions = std::move(st.metrics);
    start = st.session + 1;
  }

  for (int i = start; i <= static_cast<int>(stream.sessions.size()); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    if (i == 1) {
      BaseResult base =
          train_base_session(config, stream.manifest, stream.sessions.front(), &auditor);
      model.emplace(std::move(base.model));
      memory = std::move(base.memory);
      SessionMetrics m;
      run_phase(&auditor, 1, "evaluate", [&] {
        m = evaluate_session(config, stream, 1, *model, memory);
        return json{{"overall", m.overall_acc}};
      });
      m.wall_time = seconds_since(t0);
      report.sessions.push_back(m);
    } else {
      IncrementalResult r =
          run_incremental_session(config, stream, i, *model, memory, feature_scale, &auditor);
      model.emplace(std::move(r.model));
      memory = std::move(r.memory);
      report.sessions.push_back(std::move(r.metrics));
    }
    finalize_summary(report);
    if (config.checkpoints_enabled)
      save_checkpoint((out / "checkpoints" / ("session_" + std::to_string(i) + ".uadcebox")).string(),
                      *model, memory, stream.manifest, config, report.sessions, i);
    write_artifacts(report, out);  // rewritten per session: crashes keep partial results
  }

  finalize_summary(report);
  write_artifacts(report, out);
  return report;
}

}  // namespace uadce
