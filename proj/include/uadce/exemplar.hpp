#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uadce/model.hpp"

namespace uadce {

enum class Provenance { Labeled, Pseudo };

struct Exemplar {
  int64_t sample_id = 0;
  int class_id = 0;
  Provenance provenance = Provenance::Labeled;
  std::optional<double> uncertainty;  // lambda cache, written by refinement
};

// Rehearsal memory. Class lists are kept in herding-selection order; once a
// class is stored its list never changes in later sessions.
struct ExemplarSet {
  int per_class_budget = 0;  // m
  std::map<int, std::vector<Exemplar>> classes;

  size_t total() const {
    size_t n = 0;
    for (const auto& [cls, list] : classes) n += list.size();
    return n;
  }
};

// Greedy herding over candidate features: step t picks the unchosen index
// minimizing the distance between the candidate mean and the running mean of
// chosen features. Ties go to the lowest index. The result is a greedy
// prefix: herding_select(f, a) is a prefix of herding_select(f, b) for a < b.
std::vector<size_t> herding_select(const std::vector<std::vector<double>>& features, int m);

struct MemoryCandidate {
  int64_t sample_id = 0;
  int class_id = 0;
  const double* input = nullptr;
  Provenance provenance = Provenance::Labeled;
};

// Builds E_i from E_{i-1}: existing classes carry over untouched; each new
// class selects up to previous.per_class_budget exemplars from its labeled
// plus pseudo candidates, embedded by the given model. policy "random" swaps
// herding for a seeded shuffle (ablation baseline).
ExemplarSet update_exemplars(const ExemplarSet& previous,
                             const std::vector<MemoryCandidate>& session_labeled,
                             const std::vector<MemoryCandidate>& session_pseudo,
                             const Model& model, const std::string& policy = "herding",
                             uint64_t seed = 0);

}  // namespace uadce
