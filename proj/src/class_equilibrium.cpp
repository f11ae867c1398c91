#include "uadce/class_equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "uadce/error.hpp"

namespace uadce {

std::pair<int, double> pseudo_label(const std::vector<double>& dist,
                                    const std::vector<int>& session_classes) {
  if (session_classes.empty()) throw_contract("pseudo_label: session class list is empty");
  double slice_sum = 0.0;
  for (int c : session_classes) {
    if (c < 0 || static_cast<size_t>(c) >= dist.size())
      throw_contract("pseudo_label: class " + std::to_string(c) +
                     " outside the distribution of size " + std::to_string(dist.size()));
    slice_sum += dist[static_cast<size_t>(c)];
  }
  if (!(slice_sum > 0.0))
    throw_contract("pseudo_label: distribution carries no mass on the session classes");

  int best = session_classes.front();
  double best_p = dist[static_cast<size_t>(best)];
  for (int c : session_classes) {
    double p = dist[static_cast<size_t>(c)];
    if (p > best_p) {  // strict >: ties keep the lowest class-id seen first
      best = c;
      best_p = p;
    }
  }
  return {best, best_p / slice_sum};
}

CandidateMap partition_confident(const std::vector<PoolItem>& pool, const Model& model,
                                 const SelectionPolicy& policy,
                                 const std::vector<int>& session_classes) {
  CandidateMap out;
  for (size_t pos = 0; pos < pool.size(); ++pos) {
    std::vector<double> probs = softmax(model.logits(pool[pos].input));
    auto [label, confidence] = pseudo_label(probs, session_classes);
    if (confidence > policy.gamma) out[label].push_back({pool[pos].id, confidence, pos});
  }
  for (auto& [cls, list] : out) {
    std::stable_sort(list.begin(), list.end(), [](const Candidate& a, const Candidate& b) {
      return a.confidence > b.confidence;  // stable: equal confidence keeps pool order
    });
  }
  return out;
}

namespace {

void check_monotone_constraint(const CandidateMap& candidates,
                               const std::map<int, double>& proportions,
                               const std::vector<int>& session_classes) {
  // Literal pairwise check over classes with nonempty candidate lists: a
  // class with fewer candidates must not get a smaller fraction. Empty lists
  // are exempt (their selection is vacuous).
  for (int a : session_classes) {
    auto ia = candidates.find(a);
    if (ia == candidates.end() || ia->second.empty()) continue;
    for (int b : session_classes) {
      if (a == b) continue;
      auto ib = candidates.find(b);
      if (ib == candidates.end() || ib->second.empty()) continue;
      size_t na = ia->second.size(), nb = ib->second.size();
      double pa = proportions.at(a), pb = proportions.at(b);
      if (na <= nb && pa < pb)
        throw_policy("proportion table violates the monotone constraint: class " +
                     std::to_string(a) + " has " + std::to_string(na) +
                     " candidates with proportion " + std::to_string(pa) + ", class " +
                     std::to_string(b) + " has " + std::to_string(nb) +
                     " candidates with proportion " + std::to_string(pb));
    }
  }
}

}  // namespace

std::vector<PseudoItem> class_balanced_select(const CandidateMap& candidates,
                                              const SelectionPolicy& policy,
                                              const std::vector<int>& session_classes) {
  if (policy.iteration_budget <= 0) throw_policy("iteration_budget must be positive");
  std::vector<PseudoItem> out;

  auto take_prefix = [&out](int cls, const std::vector<Candidate>& list, size_t count) {
    for (size_t i = 0; i < count && i < list.size(); ++i)
      out.push_back({list[i].id, cls, list[i].confidence});
  };

  switch (policy.mode) {
    case SelectionMode::EqualQuota: {
      size_t quota = static_cast<size_t>(policy.iteration_budget) / session_classes.size();
      for (int cls : session_classes) {
        auto it = candidates.find(cls);
        if (it == candidates.end()) continue;
        take_prefix(cls, it->second, quota);
      }
      break;
    }
    case SelectionMode::Proportions: {
      for (int cls : session_classes)
        if (!policy.proportions.count(cls))
          throw_policy("proportion table is missing session class " + std::to_string(cls));
      check_monotone_constraint(candidates, policy.proportions, session_classes);
      size_t total = 0;
      for (int cls : session_classes) {
        auto it = candidates.find(cls);
        if (it == candidates.end() || it->second.empty()) continue;
        total += static_cast<size_t>(
            std::floor(policy.proportions.at(cls) * static_cast<double>(it->second.size())));
      }
      if (total > static_cast<size_t>(policy.iteration_budget))
        throw_policy("proportion table selects " + std::to_string(total) +
                     " items, exceeding the iteration budget of " +
                     std::to_string(policy.iteration_budget));
      for (int cls : session_classes) {
        auto it = candidates.find(cls);
        if (it == candidates.end() || it->second.empty()) continue;
        size_t count = static_cast<size_t>(
            std::floor(policy.proportions.at(cls) * static_cast<double>(it->second.size())));
        take_prefix(cls, it->second, count);
      }
      break;
    }
    case SelectionMode::Plain: {
      std::vector<std::pair<int, Candidate>> flat;
      for (const auto& [cls, list] : candidates)
        for (const Candidate& c : list) flat.emplace_back(cls, c);
      std::sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) {
        if (a.second.confidence != b.second.confidence)
          return a.second.confidence > b.second.confidence;
        return a.second.pool_pos < b.second.pool_pos;
      });
      size_t take = std::min<size_t>(flat.size(), static_cast<size_t>(policy.iteration_budget));
      for (size_t i = 0; i < take; ++i)
        out.push_back({flat[i].second.id, flat[i].first, flat[i].second.confidence});
      break;
    }
  }
  return out;
}

std::vector<PseudoItem> run_unlabeled_iterations(Model& model, std::vector<PoolItem> pool,
                                                 const std::vector<int>& session_classes,
                                                 const SelectionPolicy& policy,
                                                 const TrainStepFn& train_step,
                                                 std::vector<IterationRecord>* records) {
  std::vector<PseudoItem> cumulative;
  std::set<int64_t> selected_ids;

  for (int t = 1; t <= policy.iterations; ++t) {
    CandidateMap candidates = partition_confident(pool, model, policy, session_classes);
    std::vector<PseudoItem> picked = class_balanced_select(candidates, policy, session_classes);

    IterationRecord rec;
    rec.iteration = t;
    for (const auto& [cls, list] : candidates)
      rec.candidate_counts[cls] = static_cast<int>(list.size());
    for (const PseudoItem& item : picked) {
      if (!selected_ids.insert(item.id).second)
        throw_contract("unlabeled sample " + std::to_string(item.id) + " selected twice");
      rec.selected_counts[item.label] += 1;
      auto [mn, inserted] = rec.min_confidence.try_emplace(item.label, item.confidence);
      if (!inserted) mn->second = std::min(mn->second, item.confidence);
      rec.mean_confidence[item.label] += item.confidence;
      cumulative.push_back(item);
    }
    for (auto& [cls, sum] : rec.mean_confidence) sum /= rec.selected_counts.at(cls);

    if (!picked.empty()) {
      std::set<int64_t> remove;
      for (const PseudoItem& item : picked) remove.insert(item.id);
      std::vector<PoolItem> rest;
      rest.reserve(pool.size() - remove.size());
      for (const PoolItem& p : pool)
        if (!remove.count(p.id)) rest.push_back(p);
      pool = std::move(rest);
    }
    rec.pool_remaining = static_cast<int>(pool.size());
    if (records) records->push_back(rec);

    if (train_step) train_step(cumulative, t);
  }
  return cumulative;
}

}  // namespace uadce
