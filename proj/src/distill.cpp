#include "uadce/distill.hpp"

#include <algorithm>
#include <cmath>

#include "uadce/error.hpp"
#include "uadce/rng.hpp"

namespace uadce {

double estimate_uncertainty(const Model& model, const std::vector<double>& input,
                            const UncertaintySpec& spec, uint64_t seed) {
  return estimate_uncertainty_detail(model, input, spec, seed, nullptr);
}

double estimate_uncertainty_detail(const Model& model, const std::vector<double>& input,
                                   const UncertaintySpec& spec, uint64_t seed,
                                   std::vector<std::vector<double>>* probs_out) {
  if (spec.pass_count < 2) throw_contract("estimate_uncertainty: pass_count must be at least 2");
  if (spec.noise_scale < 0.0) throw_contract("estimate_uncertainty: noise_scale must be nonnegative");
  if (!spec.feature_scale.empty() && spec.feature_scale.size() != input.size())
    throw_contract("estimate_uncertainty: feature_scale has " +
                   std::to_string(spec.feature_scale.size()) + " entries for input dimension " +
                   std::to_string(input.size()));

  rng::Rng noise(seed);
  size_t classes = static_cast<size_t>(model.known_classes());
  std::vector<std::vector<double>> probs;
  probs.reserve(static_cast<size_t>(spec.pass_count));
  std::vector<double> perturbed(input.size());
  for (int p = 0; p < spec.pass_count; ++p) {
    for (size_t d = 0; d < input.size(); ++d) {
      double scale = spec.feature_scale.empty() ? 1.0 : spec.feature_scale[d];
      perturbed[d] = input[d] + spec.noise_scale * scale * noise.normal();
    }
    probs.push_back(model.forward(perturbed));
  }

  // mean over classes of the population variance across passes
  double lambda = 0.0;
  double inv_passes = 1.0 / static_cast<double>(spec.pass_count);
  for (size_t c = 0; c < classes; ++c) {
    // Identical passes (zero noise, or a model that ignores its input) must
    // give exactly zero; the rounded mean would otherwise leak ~ulp^2.
    double lo = probs[0][c], hi = probs[0][c];
    for (const auto& row : probs) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    if (lo == hi) continue;
    double mean = 0.0;
    for (const auto& row : probs) mean += row[c];
    mean *= inv_passes;
    double var = 0.0;
    for (const auto& row : probs) {
      double d = row[c] - mean;
      var += d * d;
    }
    lambda += var * inv_passes;
  }
  lambda /= static_cast<double>(classes);

  if (probs_out) *probs_out = std::move(probs);
  return lambda;
}

RefinementResult refine_exemplars(const ExemplarSet& exemplars, const Model& reference,
                                  double keep_fraction, const UncertaintySpec& spec,
                                  uint64_t session_seed, const InputResolver& resolve,
                                  bool literal_comparator) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw_contract("refine_exemplars: keep_fraction must lie in (0, 1]");
  size_t total = exemplars.total();
  if (total == 0) throw_contract("refine_exemplars: exemplar set is empty");

  struct Ranked {
    const Exemplar* exemplar;
    double lambda;
    int class_id;
    size_t position;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(total);
  for (const auto& [cls, list] : exemplars.classes) {
    for (size_t pos = 0; pos < list.size(); ++pos) {
      const Exemplar& e = list[pos];
      const double* x = resolve(e);
      double lambda = estimate_uncertainty(
          reference, std::vector<double>(x, x + reference.input_dim()), spec,
          rng::derive_seed(session_seed, "noise", static_cast<uint64_t>(e.sample_id)));
      ranked.push_back({&e, lambda, cls, pos});
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    return a.position < b.position;
  });

  size_t keep = static_cast<size_t>(
      std::ceil(keep_fraction * static_cast<double>(total) - 1e-12));
  keep = std::min(keep, total);

  RefinementResult result;
  result.refined.per_class_budget = exemplars.per_class_budget;
  for (const auto& [cls, list] : exemplars.classes) result.refined.classes[cls];

  std::vector<char> kept_flags(total, 0);
  for (size_t r = 0; r < total; ++r) {
    bool kept = literal_comparator ? r >= total - keep : r < keep;
    kept_flags[r] = kept ? 1 : 0;
  }

  // Survivors re-enter their class lists in original order.
  std::map<int, std::map<size_t, std::pair<const Exemplar*, double>>> survivors;
  for (size_t r = 0; r < total; ++r) {
    const Ranked& rk = ranked[r];
    RefinementEntry entry;
    entry.exemplar = *rk.exemplar;
    entry.exemplar.uncertainty = rk.lambda;
    entry.lambda = rk.lambda;
    entry.kept = kept_flags[r] != 0;
    result.audit.push_back(entry);
    if (entry.kept) survivors[rk.class_id][rk.position] = {rk.exemplar, rk.lambda};
  }
  for (const auto& [cls, by_pos] : survivors) {
    auto& list = result.refined.classes[cls];
    for (const auto& [pos, pair] : by_pos) {
      Exemplar e = *pair.first;
      e.uncertainty = pair.second;
      list.push_back(e);
    }
  }
  return result;
}

AdaptiveWeight adaptive_weight(double zeta_base, int64_t e_size, int64_t e_refined_size,
                               int old_classes, int new_classes) {
  if (!(zeta_base > 0.0) || !std::isfinite(zeta_base))
    throw_contract("adaptive_weight: zeta_base must be positive and finite");
  if (e_size <= 0) throw_contract("adaptive_weight: exemplar count must be positive");
  if (e_refined_size <= 0 || new_classes <= 0)
    throw_contract("adaptive_weight: arithmetic domain requires positive refined size and new-class count");
  if (old_classes <= 0) throw_contract("adaptive_weight: old-class count must be positive");
  if (e_refined_size > e_size)
    throw_contract("adaptive_weight: refined set cannot exceed the original exemplar set");

  AdaptiveWeight w;
  w.zeta_base = zeta_base;
  w.exemplar_ratio = static_cast<double>(e_size) / static_cast<double>(e_refined_size);
  w.class_ratio = std::sqrt(static_cast<double>(old_classes) / static_cast<double>(new_classes));
  w.zeta = zeta_base * w.exemplar_ratio * w.class_ratio;
  return w;
}

namespace {

// Softened distributions restricted to the reference's classes. The target
// logits slice reuses the model's full forward.
std::vector<double> softened_slice(const std::vector<double>& logits, size_t classes, double t) {
  std::vector<double> slice(logits.begin(), logits.begin() + static_cast<long>(classes));
  return softmax(slice, t);
}

}  // namespace

double distillation_loss(const Model& reference, const Model& target,
                         const std::vector<const double*>& refined_inputs, double temperature) {
  if (reference.known_classes() > target.known_classes())
    throw_contract("distillation_loss: reference head is wider than the target head");
  if (!(temperature > 0.0)) throw_contract("distillation_loss: temperature must be positive");
  if (refined_inputs.empty()) return 0.0;  // skipped distillation records zero loss

  size_t old_classes = static_cast<size_t>(reference.known_classes());
  double loss = 0.0;
  for (const double* x : refined_inputs) {
    std::vector<double> p_ref = softened_slice(reference.logits(x), old_classes, temperature);
    std::vector<double> q = softened_slice(target.logits(x), old_classes, temperature);
    for (size_t c = 0; c < old_classes; ++c) loss -= p_ref[c] * std::log(std::max(q[c], 1e-300));
  }
  return loss / static_cast<double>(refined_inputs.size());
}

LossBreakdown session_loss(Model& model, const Model* reference,
                           const std::vector<LabeledExample>& batch_labeled,
                           const std::vector<const double*>& refined_inputs, double zeta,
                           double temperature, bool with_grads) {
  if (!std::isfinite(zeta)) throw_contract("session_loss: weight must be finite");
  LossBreakdown out;
  out.zeta = reference ? zeta : 0.0;

  size_t known = static_cast<size_t>(model.known_classes());
  TrainContext ctx;
  std::vector<double> feat, logits, dlogits;

  if (!batch_labeled.empty()) {
    double inv_n = 1.0 / static_cast<double>(batch_labeled.size());
    for (const LabeledExample& ex : batch_labeled) {
      if (ex.label < 0 || static_cast<size_t>(ex.label) >= known)
        throw_contract("session_loss: label " + std::to_string(ex.label) +
                       " outside the model's " + std::to_string(known) + " classes");
      model.forward_train(ex.input, ctx, feat, logits);
      std::vector<double> probs = softmax(logits);
      out.ce += -std::log(std::max(probs[static_cast<size_t>(ex.label)], 1e-300)) * inv_n;
      if (with_grads) {
        dlogits = probs;
        dlogits[static_cast<size_t>(ex.label)] -= 1.0;
        for (double& g : dlogits) g *= inv_n;
        model.backward(ex.input, ctx, feat, dlogits);
      }
    }
  }

  if (reference && !refined_inputs.empty()) {
    size_t old_classes = static_cast<size_t>(reference->known_classes());
    if (old_classes > known)
      throw_contract("session_loss: reference head is wider than the target head");
    double inv_n = 1.0 / static_cast<double>(refined_inputs.size());
    for (const double* x : refined_inputs) {
      std::vector<double> p_ref = softened_slice(reference->logits(x), old_classes, temperature);
      model.forward_train(x, ctx, feat, logits);
      std::vector<double> q = softened_slice(logits, old_classes, temperature);
      for (size_t c = 0; c < old_classes; ++c)
        out.dl += -p_ref[c] * std::log(std::max(q[c], 1e-300)) * inv_n;
      if (with_grads) {
        dlogits.assign(known, 0.0);
        for (size_t c = 0; c < old_classes; ++c)
          dlogits[c] = out.zeta * (q[c] - p_ref[c]) / temperature * inv_n;
        model.backward(x, ctx, feat, dlogits);
      }
    }
  }

  out.total = out.ce + out.zeta * out.dl;
  return out;
}

}  // namespace uadce
