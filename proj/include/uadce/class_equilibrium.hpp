#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "uadce/model.hpp"

namespace uadce {

// equal_quota: floor(budget / N) top-confidence items per session class.
// proportions: explicit per-class fraction table, validated against the
//              monotone constraint (smaller candidate lists never get a
//              smaller fraction than larger ones).
// plain: top-confidence items across all classes, no balancing (ablation).
enum class SelectionMode { EqualQuota, Proportions, Plain };

struct SelectionPolicy {
  double gamma = 0.0;         // strict confidence threshold
  int iteration_budget = 10;  // samples added per unlabeled iteration
  int iterations = 10;        // L
  SelectionMode mode = SelectionMode::EqualQuota;
  std::map<int, double> proportions;  // class-id -> fraction, Proportions mode
};

struct PoolItem {
  int64_t id = 0;
  const double* input = nullptr;
};

// A pool item once selected: the pseudo label is fixed at selection time and
// never recomputed.
struct PseudoItem {
  int64_t id = 0;
  int label = 0;
  double confidence = 0.0;
};

struct Candidate {
  int64_t id = 0;
  double confidence = 0.0;
  size_t pool_pos = 0;  // position in the iteration's pool; stabilizes ties
};

// Per-class candidate lists, each sorted by descending confidence.
using CandidateMap = std::map<int, std::vector<Candidate>>;

// Argmax over the session-class slice of a full distribution, re-normalized
// to the slice. Ties go to the lowest class-id.
std::pair<int, double> pseudo_label(const std::vector<double>& dist,
                                    const std::vector<int>& session_classes);

// Predicts every pool item and keeps those with confidence strictly above
// gamma, grouped by pseudo class.
CandidateMap partition_confident(const std::vector<PoolItem>& pool, const Model& model,
                                 const SelectionPolicy& policy,
                                 const std::vector<int>& session_classes);

// One iteration's additions to the selected set, per the policy mode. Each
// class contributes a top-confidence prefix of its candidate list.
std::vector<PseudoItem> class_balanced_select(const CandidateMap& candidates,
                                              const SelectionPolicy& policy,
                                              const std::vector<int>& session_classes);

struct IterationRecord {
  int iteration = 0;  // 1-based
  std::map<int, int> candidate_counts;
  std::map<int, int> selected_counts;
  std::map<int, double> min_confidence;   // over the iteration's selections
  std::map<int, double> mean_confidence;
  int pool_remaining = 0;
};

using TrainStepFn = std::function<void(const std::vector<PseudoItem>& cumulative, int iteration)>;

// The session's unlabeled phase: L times, re-predict the remaining pool with
// the current model, select, move selections out of the pool, then hand the
// cumulative selected set to train_step (invoked even when the iteration
// selected nothing). Returns the accumulated selections in order.
std::vector<PseudoItem> run_unlabeled_iterations(Model& model, std::vector<PoolItem> pool,
                                                 const std::vector<int>& session_classes,
                                                 const SelectionPolicy& policy,
                                                 const TrainStepFn& train_step,
                                                 std::vector<IterationRecord>* records = nullptr);

}  // namespace uadce
