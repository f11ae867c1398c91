#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uadce/class_equilibrium.hpp"
#include "uadce/config.hpp"
#include "uadce/distill.hpp"
#include "uadce/exemplar.hpp"
#include "uadce/model.hpp"
#include "uadce/protocol.hpp"

namespace uadce {

class JsonlWriter;

struct SessionMetrics {
  int session_index = 0;
  double overall_acc = 0.0;  // percent
  double base_acc = 0.0;
  std::optional<double> novel_acc;  // absent for the base session
  // Secondary metrics from the classification head (cnn-head ablation); the
  // nearest-mean numbers above stay the primary indicator either way.
  std::optional<double> head_overall;
  std::optional<double> head_base;
  std::optional<double> head_novel;
  std::string timestamp;   // UTC, second resolution
  double wall_time = 0.0;  // seconds, whole session
  int test_count = 0;
};

struct RunReport {
  std::string name;
  uint64_t seed = 0;
  Ablation ablation = Ablation::None;
  std::vector<SessionMetrics> sessions;
  double pd = 0.0;           // first session's overall minus the last's
  double average_acc = 0.0;  // mean of the overall accuracies
  std::string output_dir;
  std::vector<std::string> audit_files;  // relative to output_dir
  nlohmann::json config_snapshot;
};

double performance_drop(double first_acc, double last_acc);
double average_accuracy(const std::vector<double>& accs);  // accs nonempty

// Audit sinks; null members are skipped. Every phase writes its line (done or
// error) before an exception leaves the session, so a crashed run still
// explains where it died.
struct Auditor {
  JsonlWriter* sessions = nullptr;    // phase status stream
  JsonlWriter* selection = nullptr;   // one line per unlabeled iteration
  JsonlWriter* refinement = nullptr;  // one line per ranked exemplar
};

struct EvalOptions {
  bool normalize = false;
  bool head_metrics = false;
};

// Nearest-mean classification over the test set, split into overall, base and
// novel accuracy. novel_acc stays unset when novel_classes has no test items
// (the base session). head_metrics adds the head-argmax numbers as secondary
// fields. Missing prototype for a test class is an evaluation error.
SessionMetrics evaluate(const Model& model, const PrototypeTable& prototypes,
                        const std::vector<const Sample*>& test_set,
                        const std::vector<int>& base_classes,
                        const std::vector<int>& novel_classes, const EvalOptions& opts = {});

struct BaseResult {
  Model model;
  ExemplarSet memory;
};

// The first session: cross-entropy training on the labeled base data with the
// stepped learning-rate schedule, exemplar memory built from the trained
// features, then the configured front groups frozen for the rest of the run.
BaseResult train_base_session(const ExperimentConfig& config, const DatasetManifest& manifest,
                              const SessionSpec& session_1, Auditor* audit = nullptr);

struct IncrementalResult {
  Model model;
  ExemplarSet memory;
  SessionMetrics metrics;
  std::vector<PseudoItem> pseudo;  // pool selections; labels fixed at selection
  AdaptiveWeight weight;
};

// One incremental session, in phase order: head expansion; supervised epochs
// on memory plus the labeled shots; exemplar refinement against the frozen
// reference; distillation weight; unlabeled iterations where every training
// pass minimizes cross-entropy plus weighted distillation over the refined
// set; memory update; nearest-mean evaluation over all seen classes.
IncrementalResult run_incremental_session(const ExperimentConfig& config,
                                          const SessionStream& stream, int session_index,
                                          const Model& reference, const ExemplarSet& memory,
                                          const std::vector<double>& feature_scale,
                                          Auditor* audit = nullptr);

// Per-dimension population std of the base session's labeled inputs; scales
// the uncertainty noise so the knob stays dimensionless.
std::vector<double> base_feature_scale(const DatasetManifest& manifest,
                                       const SessionSpec& session_1);

// The whole protocol: builds the stream, runs every session, and writes
// metrics.csv, report.json, accuracy.svg, the audit files, and per-session
// checkpoints under config.output_dir. Artifacts are rewritten after each
// session, so a failed run keeps everything up to the crash. Deterministic
// per seed. resume_checkpoint restarts after the checkpointed session; the
// checkpoint must come from a run with the same seed and dataset.
RunReport run_experiment(const ExperimentConfig& config,
                         const std::string& resume_checkpoint = {});

}  // namespace uadce
