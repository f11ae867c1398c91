#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "uadce/error.hpp"
#include "uadce/protocol.hpp"
#include "uadce/rng.hpp"

using namespace uadce;

namespace {

SyntheticSpec desk_spec(uint64_t seed = 11) {
  SyntheticSpec s;
  s.class_count = 10;
  s.samples_per_class = 30;
  s.dimension = 6;
  s.separation = 8.0;
  s.seed = seed;
  return s;
}

ProtocolConfig large_protocol() {
  ProtocolConfig p;
  p.base_class_count = 60;
  p.n_way = 5;
  p.k_shot = 5;
  p.session_count = 9;
  p.unlabeled_pool_size = 50;
  p.seed = 3;
  p.train_fraction = 0.8;
  return p;
}

}  // namespace

TEST_CASE("synthetic manifest layout and separability") {
  auto spec = desk_spec();
  auto m = synthetic_manifest(spec);
  CHECK(m.class_count == 10);
  CHECK(m.dimension == 6);
  REQUIRE(m.samples.size() == 300);

  std::map<int, int> per_class;
  for (size_t i = 0; i < m.samples.size(); ++i) {
    CHECK(m.samples[i].id == static_cast<int64_t>(i));
    CHECK(m.samples[i].input.size() == 6);
    per_class[m.samples[i].class_id]++;
  }
  for (int c = 0; c < 10; ++c) CHECK(per_class[c] == 30);

  // With means 8 apart and unit variance, nearest-class-mean on the raw
  // inputs is an independent oracle that should score nearly perfectly.
  std::map<int, std::vector<double>> mean;
  for (const auto& s : m.samples) {
    auto& v = mean[s.class_id];
    if (v.empty()) v.assign(6, 0.0);
    for (int d = 0; d < 6; ++d) v[static_cast<size_t>(d)] += s.input[static_cast<size_t>(d)];
  }
  for (auto& [c, v] : mean)
    for (double& x : v) x /= 30.0;
  int hits = 0;
  for (const auto& s : m.samples) {
    int best = -1;
    double best_d = 0.0;
    for (const auto& [c, v] : mean) {
      double d = 0.0;
      for (int k = 0; k < 6; ++k) {
        double diff = s.input[static_cast<size_t>(k)] - v[static_cast<size_t>(k)];
        d += diff * diff;
      }
      if (best < 0 || d < best_d) best = c, best_d = d;
    }
    hits += best == s.class_id;
  }
  CHECK(hits >= 297);

  // Same seed regenerates the identical manifest; a different seed does not.
  auto m2 = synthetic_manifest(spec);
  REQUIRE(m2.samples.size() == m.samples.size());
  bool same = true;
  for (size_t i = 0; i < m.samples.size(); ++i)
    same = same && m.samples[i].input == m2.samples[i].input;
  CHECK(same);
  auto m3 = synthetic_manifest(desk_spec(12));
  bool all_equal = true;
  for (size_t i = 0; i < m.samples.size(); ++i)
    all_equal = all_equal && m.samples[i].input == m3.samples[i].input;
  CHECK_FALSE(all_equal);
}

TEST_CASE("benchmark stream satisfies the session protocol invariants") {
  SyntheticSpec spec;
  spec.class_count = 100;
  spec.samples_per_class = 50;
  spec.dimension = 5;
  spec.separation = 6.0;
  spec.seed = 21;
  auto cfg = large_protocol();
  auto stream = build_benchmark(synthetic_manifest(spec), cfg);
  REQUIRE(stream.sessions.size() == 9);

  const auto& mf = stream.manifest;
  std::set<int> seen_classes;
  std::set<int64_t> all_labeled;
  size_t expected_test = 0;

  for (size_t si = 0; si < stream.sessions.size(); ++si) {
    const auto& s = stream.sessions[si];
    CHECK(s.index == static_cast<int>(si) + 1);

    // Class sets are disjoint, contiguous, and ascending across the stream.
    for (int c : s.class_ids) {
      CHECK_FALSE(seen_classes.count(c));
      if (!seen_classes.empty()) CHECK(c > *seen_classes.rbegin());
      seen_classes.insert(c);
    }
    CHECK(s.class_ids.size() == (si == 0 ? 60u : 5u));

    std::set<int> session_set(s.class_ids.begin(), s.class_ids.end());
    if (si == 0) {
      CHECK(s.unlabeled.empty());
    } else {
      // Exactly K shots per new class.
      std::map<int, int> shots;
      for (int64_t id : s.labeled) shots[mf.sample(id).class_id]++;
      CHECK(shots.size() == 5);
      for (int c : s.class_ids) CHECK(shots[c] == 5);

      // Pool: within budget, new-session classes only (no distractors), and
      // disjoint from the shots.
      CHECK(s.unlabeled.size() <= 50);
      std::set<int64_t> labeled_set(s.labeled.begin(), s.labeled.end());
      for (int64_t id : s.unlabeled) {
        CHECK(session_set.count(mf.sample(id).class_id));
        CHECK_FALSE(labeled_set.count(id));
      }
    }

    // No sample is labeled in two different sessions.
    for (int64_t id : s.labeled) {
      CHECK_FALSE(all_labeled.count(id));
      all_labeled.insert(id);
    }

    // Test set is cumulative over everything seen and disjoint from training.
    std::set<int64_t> test_set(s.test.begin(), s.test.end());
    CHECK(test_set.size() == s.test.size());
    for (int64_t id : s.test) CHECK(seen_classes.count(mf.sample(id).class_id));
    for (int64_t id : s.labeled) CHECK_FALSE(test_set.count(id));
    for (int64_t id : s.unlabeled) CHECK_FALSE(test_set.count(id));
    CHECK(s.test.size() > expected_test);
    expected_test = s.test.size();
    if (si > 0) {
      const auto& prev = stream.sessions[si - 1].test;
      std::set<int64_t> prev_set(prev.begin(), prev.end());
      for (int64_t id : prev) CHECK(test_set.count(id));
    }
  }
  CHECK(seen_classes.size() == 100);

  // Rebuilding from the same seed gives the identical curriculum.
  auto again = build_benchmark(synthetic_manifest(spec), cfg);
  for (size_t si = 0; si < stream.sessions.size(); ++si) {
    CHECK(again.sessions[si].labeled == stream.sessions[si].labeled);
    CHECK(again.sessions[si].unlabeled == stream.sessions[si].unlabeled);
    CHECK(again.sessions[si].test == stream.sessions[si].test);
  }
  auto other = cfg;
  other.seed = 4;
  auto different = build_benchmark(synthetic_manifest(spec), other);
  bool shots_match = true;
  for (size_t si = 1; si < stream.sessions.size(); ++si)
    shots_match = shots_match && different.sessions[si].labeled == stream.sessions[si].labeled;
  CHECK_FALSE(shots_match);
}

TEST_CASE("pool clamps to the available leftovers") {
  SyntheticSpec spec = desk_spec();
  ProtocolConfig p;
  p.base_class_count = 6;
  p.n_way = 2;
  p.k_shot = 5;
  p.session_count = 3;
  p.unlabeled_pool_size = 1000;  // far more than 2 * (24 - 5)
  p.seed = 5;
  p.train_fraction = 0.8;
  auto stream = build_benchmark(synthetic_manifest(spec), p);
  // 30 samples/class, 0.8 split -> 24 train; 5 shots leave 19 per class.
  CHECK(stream.sessions[1].unlabeled.size() == 38);
  CHECK(stream.sessions[2].unlabeled.size() == 38);
}

TEST_CASE("cross-session distractors draw earlier leftovers without reuse") {
  SyntheticSpec spec = desk_spec();
  ProtocolConfig p;
  p.base_class_count = 6;
  p.n_way = 2;
  p.k_shot = 5;
  p.session_count = 3;
  // Pool size below one session's 38 leftovers, so session 2 leaves unpooled
  // items behind for session 3 to draw as distractors.
  p.unlabeled_pool_size = 20;
  p.seed = 5;
  p.train_fraction = 0.8;
  p.cross_session_distractors = true;
  auto stream = build_benchmark(synthetic_manifest(spec), p);

  CHECK(stream.sessions[1].unlabeled.size() == 20);
  const auto& s3 = stream.sessions[2];
  CHECK(s3.unlabeled.size() == 20);
  std::set<int> s3_classes(s3.class_ids.begin(), s3.class_ids.end());
  int outside = 0;
  for (int64_t id : s3.unlabeled) outside += !s3_classes.count(stream.manifest.sample(id).class_id);
  CHECK(outside > 0);  // distractors actually appear

  // A sample pooled in session 2 never reappears in session 3's pool.
  std::set<int64_t> pool2(stream.sessions[1].unlabeled.begin(), stream.sessions[1].unlabeled.end());
  for (int64_t id : s3.unlabeled) CHECK_FALSE(pool2.count(id));
  // Base training data was fully labeled, so no base-class items ever pool.
  for (int64_t id : s3.unlabeled) CHECK(stream.manifest.sample(id).class_id >= 6);
}

TEST_CASE("protocol configuration errors") {
  auto m = synthetic_manifest(desk_spec());
  ProtocolConfig p;
  p.base_class_count = 6;
  p.n_way = 2;
  p.k_shot = 5;
  p.session_count = 4;  // needs 6 + 3*2 = 12 classes, only 10 exist
  p.unlabeled_pool_size = 10;
  p.train_fraction = 0.8;
  CHECK_THROWS_WITH_AS(build_benchmark(m, p), doctest::Contains("classes required"), Error);

  p.session_count = 3;
  p.k_shot = 25;  // split leaves 24 train per class
  CHECK_THROWS_WITH_AS(build_benchmark(synthetic_manifest(desk_spec()), p),
                       doctest::Contains("train samples"), Error);

  p.k_shot = 5;
  p.train_fraction = 1.2;
  CHECK_THROWS_WITH_AS(build_benchmark(synthetic_manifest(desk_spec()), p),
                       doctest::Contains("train_fraction"), Error);

  CHECK_THROWS_AS((void)m.sample(100000), Error);
}

TEST_CASE("columnar round trip preserves every value") {
  auto m = synthetic_manifest(desk_spec(31));
  auto path = std::filesystem::temp_directory_path() / "uadce_cols.txt";
  save_columnar(m, path.string());
  auto back = load_columnar(path.string());
  CHECK(back.class_count == m.class_count);
  CHECK(back.dimension == m.dimension);
  REQUIRE(back.samples.size() == m.samples.size());
  for (size_t i = 0; i < m.samples.size(); ++i) {
    CHECK(back.samples[i].class_id == m.samples[i].class_id);
    CHECK(back.samples[i].input == m.samples[i].input);  // printed round-trip exact
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_columnar("/nonexistent/uadce-data.txt"), Error);
}

TEST_CASE("directory round trip preserves every value") {
  auto m = synthetic_manifest(desk_spec(32));
  auto dir = std::filesystem::temp_directory_path() / "uadce_dirset";
  std::filesystem::remove_all(dir);
  save_directory(m, dir.string());
  auto back = load_directory(dir.string());
  CHECK(back.class_count == m.class_count);
  CHECK(back.dimension == m.dimension);
  REQUIRE(back.samples.size() == m.samples.size());
  for (size_t i = 0; i < m.samples.size(); ++i) {
    CHECK(back.samples[i].class_id == m.samples[i].class_id);
    CHECK(back.samples[i].input == m.samples[i].input);
  }
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(load_directory("/nonexistent/uadce-dir"), Error);
}

TEST_CASE("stream index file lists every session's draw") {
  auto stream = build_benchmark(synthetic_manifest(desk_spec()), [] {
    ProtocolConfig p;
    p.base_class_count = 6;
    p.n_way = 2;
    p.k_shot = 5;
    p.session_count = 3;
    p.unlabeled_pool_size = 10;
    p.seed = 5;
    p.train_fraction = 0.8;
    return p;
  }());
  auto path = std::filesystem::temp_directory_path() / "uadce_stream.json";
  write_stream_index(stream, path.string());
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"sessions\"") != std::string::npos);
  CHECK(text.find("\"labeled\"") != std::string::npos);
  CHECK(text.find("\"unlabeled\"") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("named rng streams are independent and stable") {
  // Frozen values: changing derive_seed or the generator silently breaks
  // every stored checkpoint, so the derivation itself is pinned here.
  CHECK(rng::derive_seed(1, "shots", 2) == rng::derive_seed(1, "shots", 2));
  CHECK(rng::derive_seed(1, "shots", 2) != rng::derive_seed(1, "shots", 3));
  CHECK(rng::derive_seed(1, "shots", 2) != rng::derive_seed(1, "pool", 2));
  CHECK(rng::derive_seed(1, "shots", 2) != rng::derive_seed(2, "shots", 2));

  rng::Rng r(rng::derive_seed(7, "test"));
  double u = r.uniform();
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
  rng::Rng r2(rng::derive_seed(7, "test"));
  CHECK(r2.uniform() == u);

  // Box-Muller sanity: mean and variance of a big draw.
  rng::Rng g(99);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = g.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);

  // uniform_index stays in range and hits every bucket eventually.
  rng::Rng h(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) counts[static_cast<size_t>(h.uniform_index(7))]++;
  for (int c : counts) CHECK(c > 800);
}
