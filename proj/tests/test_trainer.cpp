#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uadce/container.hpp"
#include "uadce/error.hpp"
#include "uadce/report.hpp"
#include "uadce/trainer.hpp"

using namespace uadce;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "uadce_trainer_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small separable stream: two sessions, four base classes plus one 2-way
// increment, quick enough to run several times per suite.
ExperimentConfig tiny_config(const std::string& leaf) {
  ExperimentConfig c;
  c.name = "tiny";
  c.seed = 5;
  c.output_dir = scratch(leaf).string();
  c.classes = 6;
  c.samples_per_class = 60;
  c.dimension = 6;
  c.separation = 5.0;
  c.base_classes = 4;
  c.n_way = 2;
  c.k_shot = 3;
  c.sessions = 2;
  c.unlabeled_per_session = 20;
  c.train_fraction = 0.5;
  c.hidden = {12};
  c.feature_dim = 8;
  c.base_epochs = 8;
  c.supervised_epochs = 4;
  c.extra_epochs = 1;
  c.batch_size = 8;
  c.freeze_groups = 1;
  c.iterations = 2;
  c.iteration_budget = 4;
  c.memory_per_class = 5;
  c.noise_passes = 4;
  c.validate();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("summary arithmetic") {
  CHECK(performance_drop(68.68, 21.16) == doctest::Approx(47.52).epsilon(1e-12));
  CHECK(performance_drop(50.0, 60.0) == doctest::Approx(-10.0).epsilon(1e-12));
  CHECK(average_accuracy({82.5, 70.0, 64.3}) ==
        doctest::Approx((82.5 + 70.0 + 64.3) / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(average_accuracy({}), Error);
}

TEST_CASE("base feature scale is the per-dimension population std") {
  SyntheticSpec spec;
  spec.class_count = 4;
  spec.samples_per_class = 30;
  spec.dimension = 3;
  spec.separation = 4.0;
  spec.seed = 5;
  ProtocolConfig pc;
  pc.base_class_count = 3;
  pc.n_way = 1;
  pc.k_shot = 2;
  pc.session_count = 2;
  pc.unlabeled_pool_size = 5;
  pc.seed = 11;
  pc.train_fraction = 0.5;
  SessionStream stream = build_benchmark(synthetic_manifest(spec), pc);

  std::vector<double> scale = base_feature_scale(stream.manifest, stream.sessions.front());
  REQUIRE(scale.size() == 3);
  const auto& labeled = stream.sessions.front().labeled;
  for (size_t d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (int64_t id : labeled) mean += stream.manifest.sample(id).input[d];
    mean /= static_cast<double>(labeled.size());
    double var = 0.0;
    for (int64_t id : labeled) {
      double dv = stream.manifest.sample(id).input[d] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(labeled.size());
    CHECK(scale[d] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    CHECK(scale[d] > 0.0);
  }
}

TEST_CASE("tiny run produces coherent metrics and artifacts") {
  ExperimentConfig c = tiny_config("e2e");
  RunReport r = run_experiment(c);

  REQUIRE(r.sessions.size() == 2);
  const SessionMetrics& s1 = r.sessions[0];
  const SessionMetrics& s2 = r.sessions[1];
  CHECK(s1.session_index == 1);
  CHECK_FALSE(s1.novel_acc.has_value());
  CHECK(s1.test_count == 4 * 30);  // base classes, half of 60 held out
  CHECK(s2.session_index == 2);
  CHECK(s2.novel_acc.has_value());
  CHECK(s2.test_count == 6 * 30);
  CHECK(s1.overall_acc > 80.0);  // well-separated clusters
  CHECK(s1.overall_acc <= 100.0);
  CHECK(s1.timestamp.size() >= 19);
  CHECK(s1.wall_time >= 0.0);
  CHECK_FALSE(s1.head_overall.has_value());  // secondary metrics are opt-in

  CHECK(r.pd == performance_drop(s1.overall_acc, s2.overall_acc));
  CHECK(r.average_acc ==
        doctest::Approx((s1.overall_acc + s2.overall_acc) / 2.0).epsilon(1e-12));

  fs::path out(r.output_dir);
  for (const char* f : {"metrics.csv", "report.json", "accuracy.svg", "stream_index.json",
                        "sessions.jsonl", "selection.jsonl", "refinement.jsonl"}) {
    CAPTURE(f);
    CHECK(fs::exists(out / f));
    CHECK(fs::file_size(out / f) > 0);
  }
  CHECK(fs::exists(out / "checkpoints" / "session_1.uadcebox"));
  CHECK(fs::exists(out / "checkpoints" / "session_2.uadcebox"));

  // The written report round-trips every number we key decisions on.
  RunReport back = load_report_json((out / "report.json").string());
  CHECK(back.name == r.name);
  CHECK(back.seed == r.seed);
  CHECK(back.ablation == r.ablation);
  REQUIRE(back.sessions.size() == 2);
  CHECK(back.sessions[0].overall_acc == s1.overall_acc);
  CHECK(back.sessions[1].overall_acc == s2.overall_acc);
  CHECK(back.sessions[1].novel_acc == s2.novel_acc);
  CHECK(back.pd == r.pd);
  CHECK(back.average_acc == r.average_acc);
  CHECK(back.audit_files.size() == 3);
  CHECK_FALSE(back.config_snapshot.is_null());

  // metrics.csv: header plus one fixed-format row per session, novel blank
  // for the base session.
  std::istringstream csv(slurp(out / "metrics.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "session_index,overall,base,novel");
  REQUIRE(std::getline(csv, line));
  char expect[64];
  std::snprintf(expect, sizeof expect, "1,%.2f,%.2f,", s1.overall_acc, s1.base_acc);
  CHECK(line == expect);
  REQUIRE(std::getline(csv, line));
  std::snprintf(expect, sizeof expect, "2,%.2f,%.2f,%.2f", s2.overall_acc, s2.base_acc,
                *s2.novel_acc);
  CHECK(line == expect);
  CHECK_FALSE(std::getline(csv, line));

  // The rendered table mentions every session and the summary numbers.
  std::string table = render_report_text(r);
  CHECK(table.find("tiny") != std::string::npos);
  CHECK(table.find("overall") != std::string::npos);
}

TEST_CASE("same seed reproduces metrics byte for byte, new seed moves them") {
  ExperimentConfig a = tiny_config("det_a");
  ExperimentConfig b = tiny_config("det_b");
  RunReport ra = run_experiment(a);
  RunReport rb = run_experiment(b);
  CHECK(ra.sessions[0].overall_acc == rb.sessions[0].overall_acc);
  CHECK(ra.sessions[1].overall_acc == rb.sessions[1].overall_acc);
  CHECK(slurp(fs::path(a.output_dir) / "metrics.csv") ==
        slurp(fs::path(b.output_dir) / "metrics.csv"));

  ExperimentConfig d = tiny_config("det_c");
  d.seed = 6;
  RunReport rd = run_experiment(d);
  bool moved = rd.sessions[0].overall_acc != ra.sessions[0].overall_acc ||
               rd.sessions[1].overall_acc != ra.sessions[1].overall_acc;
  CHECK(moved);
}

TEST_CASE("resuming a checkpoint reproduces the fresh run") {
  ExperimentConfig full = tiny_config("res_full");
  RunReport rf = run_experiment(full);

  ExperimentConfig res = tiny_config("res_cont");
  res.seed = full.seed;
  std::string ckpt = (fs::path(full.output_dir) / "checkpoints" / "session_1.uadcebox").string();
  RunReport rr = run_experiment(res, ckpt);

  REQUIRE(rr.sessions.size() == 2);
  CHECK(rr.sessions[0].overall_acc == rf.sessions[0].overall_acc);
  CHECK(rr.sessions[1].overall_acc == rf.sessions[1].overall_acc);
  CHECK(rr.sessions[1].base_acc == rf.sessions[1].base_acc);
  CHECK(rr.sessions[1].novel_acc == rf.sessions[1].novel_acc);
  CHECK(rr.pd == rf.pd);
  CHECK(rr.average_acc == rf.average_acc);
  CHECK(slurp(fs::path(full.output_dir) / "metrics.csv") ==
        slurp(fs::path(res.output_dir) / "metrics.csv"));

  // Resuming after the final session retrains nothing and keeps the summary.
  ExperimentConfig done = tiny_config("res_done");
  std::string last = (fs::path(full.output_dir) / "checkpoints" / "session_2.uadcebox").string();
  RunReport rdone = run_experiment(done, last);
  CHECK(rdone.sessions.size() == 2);
  CHECK(rdone.pd == rf.pd);
}

TEST_CASE("checkpoint guards refuse foreign state") {
  ExperimentConfig full = tiny_config("guard_full");
  run_experiment(full);
  std::string ckpt = (fs::path(full.output_dir) / "checkpoints" / "session_1.uadcebox").string();

  ExperimentConfig wrong_seed = tiny_config("guard_seed");
  wrong_seed.seed = full.seed + 1;
  CHECK_THROWS_WITH_AS(run_experiment(wrong_seed, ckpt),
                       doctest::Contains("does not match config seed"), Error);

  // Same seed, different data: the stored exemplar payloads no longer match
  // the manifest and the mismatch is named.
  ExperimentConfig wrong_data = tiny_config("guard_data");
  wrong_data.separation = 6.0;
  CHECK_THROWS_WITH_AS(run_experiment(wrong_data, ckpt),
                       doctest::Contains("checkpoint exemplar"), Error);

  ExperimentConfig not_box = tiny_config("guard_box");
  CHECK_THROWS_WITH_AS(
      run_experiment(not_box, (fs::path(full.output_dir) / "metrics.csv").string()),
      doctest::Contains("not a uadce container"), Error);

  ExperimentConfig missing = tiny_config("guard_missing");
  CHECK_THROWS_WITH_AS(run_experiment(missing, "/nonexistent/ckpt.uadcebox"),
                       doctest::Contains("cannot open"), Error);
}

TEST_CASE("frozen backbone groups stay bitwise fixed after the base session") {
  ExperimentConfig c = tiny_config("freeze");
  REQUIRE(c.freeze_groups == 1);
  run_experiment(c);

  Container c1 = Container::load(
      (fs::path(c.output_dir) / "checkpoints" / "session_1.uadcebox").string());
  Container c2 = Container::load(
      (fs::path(c.output_dir) / "checkpoints" / "session_2.uadcebox").string());
  Model m1 = load_model(c1);
  Model m2 = load_model(c2);

  auto p1 = m1.all_params();
  auto p2 = m2.all_params();
  REQUIRE(p1.size() == p2.size());
  // Backbone groups count from 1; freeze_groups = 1 pins the first layer.
  // The head (group 0) and the later backbone group keep training.
  bool unfrozen_changed = false;
  for (size_t i = 0; i < p1.size(); ++i) {
    REQUIRE(p1[i].group == p2[i].group);
    if (p1[i].group == 1) {
      CHECK(p1[i].tensor->value == p2[i].tensor->value);
    } else if (p1[i].tensor->value.size() == p2[i].tensor->value.size() &&
               p1[i].tensor->value != p2[i].tensor->value) {
      unfrozen_changed = true;
    }
  }
  CHECK(unfrozen_changed);
}

TEST_CASE("classification-head ablation reports secondary metrics") {
  ExperimentConfig c = tiny_config("cnnhead");
  c.ablation = Ablation::CnnHead;
  RunReport r = run_experiment(c);
  REQUIRE(r.sessions.size() == 2);
  CHECK(r.sessions[0].head_overall.has_value());
  CHECK(r.sessions[0].head_base.has_value());
  CHECK_FALSE(r.sessions[0].head_novel.has_value());  // no novel classes yet
  CHECK(r.sessions[1].head_overall.has_value());
  CHECK(r.sessions[1].head_novel.has_value());

  RunReport back = load_report_json((fs::path(c.output_dir) / "report.json").string());
  CHECK(back.ablation == Ablation::CnnHead);
  CHECK(back.sessions[1].head_overall == r.sessions[1].head_overall);
}

TEST_CASE("zero distillation weight and empty pools still complete") {
  ExperimentConfig c = tiny_config("degenerate");
  c.zeta_base = 0.0;
  c.unlabeled_per_session = 0;
  c.validate();
  RunReport r = run_experiment(c);
  REQUIRE(r.sessions.size() == 2);
  CHECK(std::isfinite(r.sessions[1].overall_acc));
  CHECK(r.sessions[1].overall_acc >= 0.0);
  CHECK(fs::exists(fs::path(c.output_dir) / "selection.jsonl"));
}

TEST_CASE("environment variables override seed and output directory") {
  ExperimentConfig c = tiny_config("env");
  uint64_t original_seed = c.seed;
  setenv("UADCE_SEED", "321", 1);
  setenv("UADCE_OUT", "/tmp/uadce_trainer_tests/env_override", 1);
  c.apply_env_overrides();
  CHECK(c.seed == 321);
  CHECK(c.output_dir == "/tmp/uadce_trainer_tests/env_override");

  setenv("UADCE_SEED", "not-a-number", 1);
  CHECK_THROWS_WITH_AS(c.apply_env_overrides(), doctest::Contains("UADCE_SEED"), Error);

  unsetenv("UADCE_SEED");
  unsetenv("UADCE_OUT");
  ExperimentConfig clean = tiny_config("env2");
  clean.apply_env_overrides();
  CHECK(clean.seed == original_seed);
}

TEST_CASE("validation names the offending key") {
  auto broken = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_WITH_AS(broken([](ExperimentConfig& c) { c.keep_fraction = 1.5; }).validate(),
                       doctest::Contains("distill.keep_fraction"), Error);
  CHECK_THROWS_WITH_AS(broken([](ExperimentConfig& c) { c.noise_passes = 1; }).validate(),
                       doctest::Contains("distill.noise_passes"), Error);
  CHECK_THROWS_WITH_AS(broken([](ExperimentConfig& c) { c.momentum = 1.0; }).validate(),
                       doctest::Contains("optimizer.momentum"), Error);
  CHECK_THROWS_WITH_AS(broken([](ExperimentConfig& c) { c.memory_policy = "fifo"; }).validate(),
                       doctest::Contains("memory.policy"), Error);
  CHECK_THROWS_WITH_AS(broken([](ExperimentConfig& c) { c.train_fraction = 1.0; }).validate(),
                       doctest::Contains("protocol.train_fraction"), Error);
}
