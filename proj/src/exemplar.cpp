#include "uadce/exemplar.hpp"

#include <algorithm>
#include <cmath>

#include "uadce/error.hpp"
#include "uadce/rng.hpp"

namespace uadce {

std::vector<size_t> herding_select(const std::vector<std::vector<double>>& features, int m) {
  if (m < 0) throw_contract("herding_select: m must be nonnegative");
  size_t n = features.size();
  if (static_cast<size_t>(m) > n)
    throw_contract("herding_select: m = " + std::to_string(m) + " exceeds " + std::to_string(n) +
                   " candidates");
  if (m == 0) return {};
  size_t dim = features[0].size();
  for (size_t j = 0; j < n; ++j) {
    if (features[j].size() != dim)
      throw_contract("herding_select: inconsistent feature dimensions");
    for (double v : features[j])
      if (!std::isfinite(v))
        throw_contract("herding_select: non-finite feature at candidate " + std::to_string(j));
  }

  std::vector<double> mean(dim, 0.0);
  for (const auto& f : features)
    for (size_t i = 0; i < dim; ++i) mean[i] += f[i];
  for (double& v : mean) v /= static_cast<double>(n);

  std::vector<size_t> chosen;
  std::vector<char> used(n, 0);
  std::vector<double> sum(dim, 0.0);
  for (int t = 1; t <= m; ++t) {
    size_t best = n;
    double best_d = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (used[j]) continue;
      double d = 0.0;
      for (size_t i = 0; i < dim; ++i) {
        double diff = mean[i] - (sum[i] + features[j][i]) / static_cast<double>(t);
        d += diff * diff;
      }
      if (best == n || d < best_d) {  // strict <: ties keep the lowest index
        best = j;
        best_d = d;
      }
    }
    used[best] = 1;
    chosen.push_back(best);
    for (size_t i = 0; i < dim; ++i) sum[i] += features[best][i];
  }
  return chosen;
}

ExemplarSet update_exemplars(const ExemplarSet& previous,
                             const std::vector<MemoryCandidate>& session_labeled,
                             const std::vector<MemoryCandidate>& session_pseudo,
                             const Model& model, const std::string& policy, uint64_t seed) {
  if (previous.per_class_budget <= 0)
    throw_contract("update_exemplars: per_class_budget must be positive");
  if (policy != "herding" && policy != "random")
    throw_contract("update_exemplars: unknown policy '" + policy + "'");

  // Group candidates per class, labeled before pseudo, input order preserved.
  std::map<int, std::vector<MemoryCandidate>> per_class;
  for (const MemoryCandidate& c : session_labeled) per_class[c.class_id].push_back(c);
  for (const MemoryCandidate& c : session_pseudo) per_class[c.class_id].push_back(c);

  ExemplarSet next = previous;
  for (const auto& [cls, candidates] : per_class) {
    if (previous.classes.count(cls))
      throw_contract("update_exemplars: class " + std::to_string(cls) +
                     " is already stored; existing classes never re-select");
    if (candidates.empty())
      throw_contract("update_exemplars: class " + std::to_string(cls) + " has no candidates");

    int take = std::min<int>(previous.per_class_budget, static_cast<int>(candidates.size()));
    std::vector<size_t> order;
    if (policy == "herding") {
      std::vector<std::vector<double>> feats;
      feats.reserve(candidates.size());
      std::vector<double> f;
      for (const MemoryCandidate& c : candidates) {
        model.extract_features(c.input, f);
        feats.push_back(f);
      }
      order = herding_select(feats, take);
    } else {
      std::vector<size_t> idx(candidates.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      rng::Rng gen(rng::derive_seed(seed, "memory", static_cast<uint64_t>(cls)));
      gen.shuffle(idx);
      order.assign(idx.begin(), idx.begin() + take);
    }

    std::vector<Exemplar>& list = next.classes[cls];
    for (size_t j : order) {
      Exemplar e;
      e.sample_id = candidates[j].sample_id;
      e.class_id = cls;
      e.provenance = candidates[j].provenance;
      list.push_back(e);
    }
  }
  return next;
}

}  // namespace uadce
