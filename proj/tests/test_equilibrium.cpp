#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "uadce/class_equilibrium.hpp"
#include "uadce/error.hpp"
#include "uadce/model.hpp"

using namespace uadce;

namespace {

// Model whose logits are exactly the input coordinates: identity backbone
// (relu over nonnegative inputs is the identity), identity head. Lets a test
// dictate the predicted distribution per pool item.
Model rigged_model(int classes) {
  BackboneSpec s;
  s.kind = "mlp";
  s.input_dim = classes;
  s.hidden = {};
  s.feature_dim = classes;
  s.activation = "relu";
  rng::Rng init(1);
  Model m(make_backbone(s, init), classes, init);
  for (auto pv : m.all_params()) {
    std::fill(pv.tensor->value.begin(), pv.tensor->value.end(), 0.0);
    if (pv.group >= 0 && pv.tensor->value.size() == static_cast<size_t>(classes * classes))
      for (int i = 0; i < classes; ++i)
        pv.tensor->value[static_cast<size_t>(i * classes + i)] = 1.0;
  }
  return m;
}

// One pool item steering the rigged model: logit vector == input.
struct RiggedPool {
  std::vector<std::vector<double>> storage;
  std::vector<PoolItem> items;

  void add(int64_t id, std::vector<double> logits) {
    storage.push_back(std::move(logits));
    items.push_back({id, nullptr});
    // Pointers are fixed up lazily because storage may reallocate.
  }
  std::vector<PoolItem> build() {
    for (size_t i = 0; i < items.size(); ++i) items[i].input = storage[i].data();
    return items;
  }
};

}  // namespace

TEST_CASE("pseudo labels renormalize over the session slice") {
  std::vector<double> dist = {0.1, 0.3, 0.2, 0.4};
  auto [label, conf] = pseudo_label(dist, {1, 2});
  CHECK(label == 1);
  CHECK(conf == doctest::Approx(0.6).epsilon(1e-12));

  // The winning class outside the slice is invisible.
  auto [l2, c2] = pseudo_label(dist, {0, 2});
  CHECK(l2 == 2);
  CHECK(c2 == doctest::Approx(0.2 / 0.3).epsilon(1e-12));

  // Exact tie: the lowest class id wins.
  std::vector<double> flat = {0.25, 0.25, 0.25, 0.25};
  CHECK(pseudo_label(flat, {2, 3}).first == 2);

  CHECK_THROWS_AS(pseudo_label(dist, {}), Error);
  CHECK_THROWS_AS(pseudo_label(dist, {7}), Error);
  std::vector<double> zero = {0.0, 0.0, 1.0};
  CHECK_THROWS_WITH_AS(pseudo_label(zero, {0, 1}), doctest::Contains("no mass"), Error);
}

TEST_CASE("confidence partition keeps strictly-above-gamma items sorted") {
  auto m = rigged_model(4);
  RiggedPool pool;
  pool.add(10, {3.0, 0.0, 0.0, 0.0});  // class 0, very confident
  pool.add(11, {1.0, 0.6, 0.0, 0.0});  // class 0, mildly confident
  pool.add(12, {0.0, 2.0, 0.0, 0.0});  // class 1
  pool.add(13, {0.5, 0.5, 0.0, 0.0});  // exact 0.5 tie between 0 and 1 -> class 0
  auto items = pool.build();

  SelectionPolicy policy;
  policy.gamma = 0.55;
  auto cands = partition_confident(items, m, policy, {0, 1});

  REQUIRE(cands.count(0));
  REQUIRE(cands.count(1));
  // Item 13's slice confidence is exactly 0.5: strictly-above excludes it.
  REQUIRE(cands[0].size() == 2);
  CHECK(cands[0][0].id == 10);  // sorted by descending confidence
  CHECK(cands[0][1].id == 11);
  CHECK(cands[0][0].confidence > cands[0][1].confidence);
  REQUIRE(cands[1].size() == 1);
  CHECK(cands[1][0].id == 12);

  // gamma = 1 can never be strictly exceeded: saturation selects nothing.
  policy.gamma = 1.0;
  auto none = partition_confident(items, m, policy, {0, 1});
  CHECK(none.empty());

  // Equal-confidence items keep pool order (stable sort on pool_pos).
  RiggedPool dup;
  dup.add(20, {2.0, 0.0, 0.0, 0.0});
  dup.add(21, {2.0, 0.0, 0.0, 0.0});
  auto ditems = dup.build();
  policy.gamma = 0.0;
  auto dcands = partition_confident(ditems, m, policy, {0, 1});
  REQUIRE(dcands[0].size() == 2);
  CHECK(dcands[0][0].id == 20);
  CHECK(dcands[0][1].id == 21);
}

TEST_CASE("equal quota takes floor(budget / N) per class") {
  auto m = rigged_model(4);
  RiggedPool pool;
  for (int i = 0; i < 8; ++i) pool.add(100 + i, {1.0 + 0.1 * i, 0.0, 0.0, 0.0});
  for (int i = 0; i < 6; ++i) pool.add(200 + i, {0.0, 1.0 + 0.1 * i, 0.0, 0.0});
  auto items = pool.build();

  SelectionPolicy policy;
  policy.gamma = 0.0;
  policy.iteration_budget = 7;  // floor(7 / 2) = 3 per class
  policy.mode = SelectionMode::EqualQuota;
  auto cands = partition_confident(items, m, policy, {0, 1});
  auto picked = class_balanced_select(cands, policy, {0, 1});

  std::map<int, std::vector<int64_t>> by_class;
  for (const auto& p : picked) by_class[p.label].push_back(p.id);
  REQUIRE(by_class[0].size() == 3);
  REQUIRE(by_class[1].size() == 3);
  // Top-confidence prefixes: the highest rigged logits win.
  CHECK(by_class[0] == std::vector<int64_t>{107, 106, 105});
  CHECK(by_class[1] == std::vector<int64_t>{205, 204, 203});

  // A class with fewer candidates than the quota contributes what it has.
  policy.iteration_budget = 20;  // quota 10
  auto all = class_balanced_select(cands, policy, {0, 1});
  std::map<int, int> counts;
  for (const auto& p : all) counts[p.label]++;
  CHECK(counts[0] == 8);
  CHECK(counts[1] == 6);
}

TEST_CASE("proportion table floors per-class counts") {
  auto m = rigged_model(4);
  RiggedPool pool;
  for (int i = 0; i < 8; ++i) pool.add(100 + i, {1.0 + 0.1 * i, 0.0, 0.0, 0.0});
  for (int i = 0; i < 3; ++i) pool.add(200 + i, {0.0, 1.0 + 0.1 * i, 0.0, 0.0});
  auto items = pool.build();

  SelectionPolicy policy;
  policy.gamma = 0.0;
  policy.iteration_budget = 10;
  policy.mode = SelectionMode::Proportions;
  policy.proportions = {{0, 0.25}, {1, 1.0}};
  auto cands = partition_confident(items, m, policy, {0, 1});
  // The smaller list (3 candidates) holds the larger fraction: allowed.
  auto picked = class_balanced_select(cands, policy, {0, 1});
  std::map<int, int> counts;
  for (const auto& p : picked) counts[p.label]++;
  CHECK(counts[0] == 2);  // floor(0.25 * 8)
  CHECK(counts[1] == 3);  // floor(1.0 * 3)

  // Flipping the fractions hands the smaller list the smaller share: the
  // monotone constraint rejects the table.
  policy.proportions = {{0, 1.0}, {1, 0.25}};
  CHECK_THROWS_WITH_AS(class_balanced_select(cands, policy, {0, 1}),
                       doctest::Contains("monotone"), Error);

  // Missing class entry.
  policy.proportions = {{0, 0.5}};
  CHECK_THROWS_WITH_AS(class_balanced_select(cands, policy, {0, 1}),
                       doctest::Contains("missing session class"), Error);

  // Overflowing the iteration budget.
  policy.proportions = {{0, 1.0}, {1, 1.0}};
  policy.iteration_budget = 5;
  CHECK_THROWS_WITH_AS(class_balanced_select(cands, policy, {0, 1}),
                       doctest::Contains("exceeding the iteration budget"), Error);
}

TEST_CASE("plain mode ignores class balance") {
  auto m = rigged_model(4);
  RiggedPool pool;
  // Class 0 dominates the confidence ranking.
  for (int i = 0; i < 5; ++i) pool.add(100 + i, {4.0 + 0.1 * i, 0.0, 0.0, 0.0});
  pool.add(200, {0.0, 0.8, 0.0, 0.0});
  auto items = pool.build();

  SelectionPolicy policy;
  policy.gamma = 0.0;
  policy.iteration_budget = 4;
  policy.mode = SelectionMode::Plain;
  auto cands = partition_confident(items, m, policy, {0, 1});
  auto picked = class_balanced_select(cands, policy, {0, 1});
  REQUIRE(picked.size() == 4);
  for (const auto& p : picked) CHECK(p.label == 0);  // easy class floods the budget
}

TEST_CASE("selection matches a brute-force oracle on a random pool") {
  BackboneSpec s;
  s.kind = "mlp";
  s.input_dim = 5;
  s.hidden = {6};
  s.feature_dim = 4;
  rng::Rng init(19);
  Model m(make_backbone(s, init), 5, init);

  rng::Rng data(77);
  std::vector<std::vector<double>> storage(50, std::vector<double>(5));
  std::vector<PoolItem> pool;
  for (int i = 0; i < 50; ++i) {
    for (double& v : storage[static_cast<size_t>(i)]) v = data.normal(0.0, 2.0);
    pool.push_back({1000 + i, storage[static_cast<size_t>(i)].data()});
  }
  std::vector<int> session = {1, 3, 4};

  SelectionPolicy policy;
  policy.gamma = 0.4;
  policy.iteration_budget = 9;  // quota 3
  policy.mode = SelectionMode::EqualQuota;

  // Oracle: label and slice-confidence by hand, filter, sort, slice.
  struct Row {
    int64_t id;
    int label;
    double conf;
    size_t pos;
  };
  std::vector<Row> rows;
  for (size_t i = 0; i < pool.size(); ++i) {
    auto probs = m.forward(storage[i]);
    int best = session[0];
    for (int c : session)
      if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
    double slice = 0.0;
    for (int c : session) slice += probs[static_cast<size_t>(c)];
    double conf = probs[static_cast<size_t>(best)] / slice;
    if (conf > policy.gamma) rows.push_back({pool[i].id, best, conf, i});
  }
  std::map<int, std::vector<Row>> grouped;
  for (const Row& r : rows) grouped[r.label].push_back(r);
  std::vector<PseudoItem> expected;
  for (int c : session) {
    auto it = grouped.find(c);
    if (it == grouped.end()) continue;
    std::stable_sort(it->second.begin(), it->second.end(),
                     [](const Row& a, const Row& b) { return a.conf > b.conf; });
    for (size_t i = 0; i < 3 && i < it->second.size(); ++i)
      expected.push_back({it->second[i].id, c, it->second[i].conf});
  }

  auto got = class_balanced_select(partition_confident(pool, m, policy, session), policy, session);
  REQUIRE(got.size() == expected.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].id == expected[i].id);
    CHECK(got[i].label == expected[i].label);
    CHECK(got[i].confidence == doctest::Approx(expected[i].confidence).epsilon(1e-12));
  }
}

TEST_CASE("iterations accumulate without duplicates and freeze labels") {
  auto m = rigged_model(3);
  RiggedPool pool;
  for (int i = 0; i < 10; ++i) pool.add(i, {1.0 + 0.05 * i, 0.0, 0.0});
  for (int i = 10; i < 20; ++i) pool.add(i, {0.0, 1.0 + 0.05 * i, 0.0});
  auto items = pool.build();

  SelectionPolicy policy;
  policy.gamma = 0.0;
  policy.iterations = 4;
  policy.iteration_budget = 4;  // quota 2 over classes {0, 1}
  policy.mode = SelectionMode::EqualQuota;

  std::vector<IterationRecord> records;
  std::vector<std::vector<PseudoItem>> snapshots;
  int calls = 0;
  auto step = [&](const std::vector<PseudoItem>& cumulative, int iteration) {
    ++calls;
    CHECK(iteration == calls);
    // The iteration's record is already written when training runs.
    CHECK(records.size() == static_cast<size_t>(iteration));
    snapshots.push_back(cumulative);
    // Sabotage the model between iterations: swap the two head rows so later
    // predictions flip. Already-selected labels must not change.
    auto& w = m.head_weight();
    for (size_t col = 0; col < 3; ++col) std::swap(w.value[col], w.value[3 + col]);
  };

  auto result = run_unlabeled_iterations(m, items, {0, 1}, policy, step, &records);
  CHECK(calls == 4);
  CHECK(result.size() <= 16);
  std::set<int64_t> ids;
  for (const auto& p : result) CHECK(ids.insert(p.id).second);

  // Earlier snapshots are immutable prefixes of later ones.
  for (size_t k = 0; k + 1 < snapshots.size(); ++k) {
    REQUIRE(snapshots[k].size() <= snapshots[k + 1].size());
    for (size_t i = 0; i < snapshots[k].size(); ++i) {
      CHECK(snapshots[k][i].id == snapshots[k + 1][i].id);
      CHECK(snapshots[k][i].label == snapshots[k + 1][i].label);
    }
  }
  CHECK(snapshots.back().size() == result.size());

  // Records track the running pool and per-class tallies.
  int prev_remaining = 20;
  size_t running = 0;
  for (const auto& rec : records) {
    int picked = 0;
    for (const auto& [cls, n] : rec.selected_counts) picked += n;
    running += static_cast<size_t>(picked);
    CHECK(rec.pool_remaining == prev_remaining - picked);
    prev_remaining = rec.pool_remaining;
    for (const auto& [cls, mn] : rec.min_confidence) {
      CHECK(mn > policy.gamma);
      CHECK(rec.mean_confidence.at(cls) >= mn);
    }
  }
  CHECK(running == result.size());
}

TEST_CASE("empty pool still runs every iteration") {
  auto m = rigged_model(3);
  SelectionPolicy policy;
  policy.iterations = 3;
  policy.iteration_budget = 5;
  int calls = 0;
  auto result = run_unlabeled_iterations(
      m, {}, {0, 1}, policy,
      [&](const std::vector<PseudoItem>& cumulative, int) {
        ++calls;
        CHECK(cumulative.empty());
      },
      nullptr);
  CHECK(calls == 3);
  CHECK(result.empty());
}

TEST_CASE("selection property sweep") {
  rng::Rng meta(404);
  for (int trial = 0; trial < 300; ++trial) {
    int classes = 2 + static_cast<int>(meta.uniform_index(3));
    auto m = rigged_model(classes);
    RiggedPool pool;
    int n = static_cast<int>(meta.uniform_index(30));
    for (int i = 0; i < n; ++i) {
      std::vector<double> logits(static_cast<size_t>(classes), 0.0);
      logits[meta.uniform_index(static_cast<uint64_t>(classes))] = 0.5 + meta.uniform() * 3.0;
      pool.add(i, std::move(logits));
    }
    auto items = pool.build();

    std::vector<int> session;
    for (int c = 0; c < classes; ++c) session.push_back(c);

    SelectionPolicy policy;
    policy.gamma = meta.uniform() * 0.6;
    policy.iteration_budget = 1 + static_cast<int>(meta.uniform_index(8));
    policy.mode = meta.uniform() < 0.5 ? SelectionMode::EqualQuota : SelectionMode::Plain;

    auto cands = partition_confident(items, m, policy, session);
    for (const auto& [cls, list] : cands)
      for (const auto& c : list) CHECK(c.confidence > policy.gamma);

    auto picked = class_balanced_select(cands, policy, session);
    CHECK(picked.size() <= static_cast<size_t>(policy.iteration_budget));
    std::set<int64_t> ids;
    for (const auto& p : picked) CHECK(ids.insert(p.id).second);

    if (policy.mode == SelectionMode::EqualQuota) {
      size_t quota = static_cast<size_t>(policy.iteration_budget) / session.size();
      std::map<int, size_t> counts;
      for (const auto& p : picked) counts[p.label]++;
      for (int c : session) {
        size_t have = cands.count(c) ? cands[c].size() : 0;
        CHECK(counts[c] == std::min(quota, have));
      }
    }
  }
}
