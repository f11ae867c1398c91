#include "uadce/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binio.hpp"
#include "uadce/error.hpp"
#include "uadce/rng.hpp"

namespace uadce {

namespace fs = std::filesystem;
using nlohmann::json;

const Sample& DatasetManifest::sample(int64_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= samples.size())
    throw_contract("sample id " + std::to_string(id) + " out of range");
  return samples[static_cast<size_t>(id)];
}

DatasetManifest synthetic_manifest(const SyntheticSpec& spec) {
  if (spec.class_count <= 0) throw_config("synthetic_manifest: class_count must be positive");
  if (spec.samples_per_class <= 0) throw_config("synthetic_manifest: samples_per_class must be positive");
  if (spec.dimension <= 0) throw_config("synthetic_manifest: dimension must be positive");
  if (!(spec.separation > 0.0)) throw_config("synthetic_manifest: separation must be positive");

  // Class means: adjacent means sit `separation` apart. One class sits at the
  // origin; a 1-d manifest puts means on a line; otherwise means go on a
  // circle in the first two dimensions with chord length = separation.
  std::vector<std::vector<double>> means(static_cast<size_t>(spec.class_count),
                                         std::vector<double>(static_cast<size_t>(spec.dimension), 0.0));
  if (spec.class_count > 1) {
    if (spec.dimension == 1) {
      for (int c = 0; c < spec.class_count; ++c) means[c][0] = spec.separation * c;
    } else {
      double radius = spec.separation / (2.0 * std::sin(M_PI / spec.class_count));
      for (int c = 0; c < spec.class_count; ++c) {
        double angle = 2.0 * M_PI * c / spec.class_count;
        means[c][0] = radius * std::cos(angle);
        means[c][1] = radius * std::sin(angle);
      }
    }
  }

  DatasetManifest m;
  m.name = spec.name;
  m.class_count = spec.class_count;
  m.dimension = spec.dimension;
  m.samples.reserve(static_cast<size_t>(spec.class_count) * spec.samples_per_class);
  rng::Rng gen(rng::derive_seed(spec.seed, "synthetic"));
  for (int c = 0; c < spec.class_count; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Sample sample;
      sample.id = static_cast<int64_t>(m.samples.size());
      sample.class_id = c;
      sample.input.resize(static_cast<size_t>(spec.dimension));
      for (int d = 0; d < spec.dimension; ++d) sample.input[d] = means[c][d] + gen.normal();
      m.samples.push_back(std::move(sample));
    }
  }
  return m;
}

namespace {

void validate_manifest(const DatasetManifest& m) {
  if (m.class_count <= 0) throw_config("manifest: class_count must be positive");
  if (m.dimension <= 0) throw_config("manifest: dimension must be positive");
  std::vector<int64_t> counts(static_cast<size_t>(m.class_count), 0);
  for (size_t i = 0; i < m.samples.size(); ++i) {
    const Sample& s = m.samples[i];
    if (s.id != static_cast<int64_t>(i))
      throw_config("manifest: sample at position " + std::to_string(i) + " has id " + std::to_string(s.id));
    if (s.class_id < 0 || s.class_id >= m.class_count)
      throw_config("manifest: sample " + std::to_string(i) + " labels unknown class " +
                   std::to_string(s.class_id));
    if (static_cast<int>(s.input.size()) != m.dimension)
      throw_config("manifest: sample " + std::to_string(i) + " has dimension " +
                   std::to_string(s.input.size()) + ", expected " + std::to_string(m.dimension));
    ++counts[static_cast<size_t>(s.class_id)];
  }
  for (int c = 0; c < m.class_count; ++c)
    if (counts[static_cast<size_t>(c)] == 0)
      throw_config("manifest: class " + std::to_string(c) + " has no samples");
}

}  // namespace

SessionStream build_benchmark(DatasetManifest manifest, const ProtocolConfig& config) {
  validate_manifest(manifest);
  if (config.base_class_count <= 0) throw_config("protocol: base_class_count must be positive");
  if (config.session_count <= 0) throw_config("protocol: session_count must be positive");
  if (config.session_count > 1) {
    if (config.n_way <= 0) throw_config("protocol: n_way must be positive");
    if (config.k_shot <= 0) throw_config("protocol: k_shot must be positive");
  }
  if (config.unlabeled_pool_size < 0) throw_config("protocol: unlabeled_pool_size must be nonnegative");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0))
    throw_config("protocol: train_fraction must lie in (0, 1)");
  int64_t needed = config.base_class_count +
                   static_cast<int64_t>(config.session_count - 1) * config.n_way;
  if (needed > manifest.class_count)
    throw_config("protocol: " + std::to_string(needed) + " classes required (base " +
                 std::to_string(config.base_class_count) + " + " +
                 std::to_string(config.session_count - 1) + " sessions x " +
                 std::to_string(config.n_way) + "-way) but manifest has " +
                 std::to_string(manifest.class_count));

  // Stratified per-class train/test split. The split covers every manifest
  // class and depends only on (manifest, seed, train_fraction), so the same
  // data yields the same partition under any session layout.
  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(manifest.class_count));
  for (const Sample& s : manifest.samples) by_class[static_cast<size_t>(s.class_id)].push_back(s.id);

  std::vector<std::vector<int64_t>> train(by_class.size()), test(by_class.size());
  rng::Rng split_rng(rng::derive_seed(config.seed, "split"));
  for (size_t c = 0; c < by_class.size(); ++c) {
    std::vector<int64_t> ids = by_class[c];
    split_rng.shuffle(ids);
    int64_t n = static_cast<int64_t>(ids.size());
    int64_t train_count = n;
    if (n >= 2) {
      train_count = std::llround(config.train_fraction * static_cast<double>(n));
      train_count = std::clamp<int64_t>(train_count, 1, n - 1);
    }
    train[c].assign(ids.begin(), ids.begin() + train_count);
    test[c].assign(ids.begin() + train_count, ids.end());
    std::sort(train[c].begin(), train[c].end());
    std::sort(test[c].begin(), test[c].end());
  }

  auto require_class = [&](int c, int64_t min_train) {
    if (static_cast<int64_t>(train[static_cast<size_t>(c)].size()) < min_train)
      throw_config("protocol: class " + std::to_string(c) + " has " +
                   std::to_string(train[static_cast<size_t>(c)].size()) +
                   " train samples, needs " + std::to_string(min_train));
    if (test[static_cast<size_t>(c)].empty())
      throw_config("protocol: class " + std::to_string(c) + " has no test samples after the split");
  };

  SessionStream stream;
  stream.config = config;

  std::vector<std::vector<int64_t>> leftovers(by_class.size());  // train minus shots
  std::set<int64_t> pooled_ids;  // keeps distractor pools disjoint across sessions
  std::vector<int64_t> cumulative_test;
  std::vector<int> seen_classes;

  for (int i = 1; i <= config.session_count; ++i) {
    SessionSpec spec;
    spec.index = i;
    if (i == 1) {
      for (int c = 0; c < config.base_class_count; ++c) spec.class_ids.push_back(c);
    } else {
      int first = config.base_class_count + (i - 2) * config.n_way;
      for (int c = first; c < first + config.n_way; ++c) spec.class_ids.push_back(c);
    }

    if (i == 1) {
      for (int c : spec.class_ids) {
        require_class(c, 1);
        auto& t = train[static_cast<size_t>(c)];
        spec.labeled.insert(spec.labeled.end(), t.begin(), t.end());
        // base training data is fully labeled; nothing is left for pools
      }
    } else {
      rng::Rng shot_rng(rng::derive_seed(config.seed, "shots", static_cast<uint64_t>(i)));
      for (int c : spec.class_ids) {
        require_class(c, config.k_shot);
        std::vector<int64_t> ids = train[static_cast<size_t>(c)];
        shot_rng.shuffle(ids);
        std::vector<int64_t> shots(ids.begin(), ids.begin() + config.k_shot);
        std::sort(shots.begin(), shots.end());
        spec.labeled.insert(spec.labeled.end(), shots.begin(), shots.end());
        std::vector<int64_t> rest(ids.begin() + config.k_shot, ids.end());
        std::sort(rest.begin(), rest.end());
        leftovers[static_cast<size_t>(c)] = std::move(rest);
      }

      std::vector<int64_t> candidates;
      for (int c : spec.class_ids) {
        const auto& rest = leftovers[static_cast<size_t>(c)];
        candidates.insert(candidates.end(), rest.begin(), rest.end());
      }
      if (config.cross_session_distractors) {
        for (int c : seen_classes) {
          for (int64_t id : leftovers[static_cast<size_t>(c)])
            if (!pooled_ids.count(id)) candidates.push_back(id);
        }
      }
      rng::Rng pool_rng(rng::derive_seed(config.seed, "pool", static_cast<uint64_t>(i)));
      pool_rng.shuffle(candidates);
      int64_t take = std::min<int64_t>(config.unlabeled_pool_size,
                                       static_cast<int64_t>(candidates.size()));
      spec.unlabeled.assign(candidates.begin(), candidates.begin() + take);
      pooled_ids.insert(spec.unlabeled.begin(), spec.unlabeled.end());
    }

    for (int c : spec.class_ids) {
      const auto& t = test[static_cast<size_t>(c)];
      cumulative_test.insert(cumulative_test.end(), t.begin(), t.end());
    }
    spec.test = cumulative_test;

    seen_classes.insert(seen_classes.end(), spec.class_ids.begin(), spec.class_ids.end());
    stream.sessions.push_back(std::move(spec));
  }

  stream.manifest = std::move(manifest);
  return stream;
}

// ---------------------------------------------------------------------------
// columnar text format

DatasetManifest load_columnar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open dataset file: " + path);
  auto fail = [&](int lineno, const std::string& msg) {
    throw_io(path + ":" + std::to_string(lineno) + ": " + msg);
  };

  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line[0] != '#') return true;
    }
    return false;
  };

  if (!next_line() || line != "uadce-columnar 1")
    fail(lineno ? lineno : 1, "expected header 'uadce-columnar 1'");

  DatasetManifest m;
  int64_t declared = -1;
  for (const char* key : {"name", "classes", "dimension", "samples"}) {
    if (!next_line()) fail(lineno, std::string("missing '") + key + "' line");
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) fail(lineno, std::string("expected '") + key + "', got '" + k + "'");
    if (std::string(key) == "name") {
      std::string rest;
      std::getline(ls, rest);
      size_t b = rest.find_first_not_of(' ');
      m.name = b == std::string::npos ? "" : rest.substr(b);
    } else {
      int64_t v;
      if (!(ls >> v)) fail(lineno, std::string("bad value for '") + key + "'");
      if (std::string(key) == "classes") m.class_count = static_cast<int>(v);
      else if (std::string(key) == "dimension") m.dimension = static_cast<int>(v);
      else declared = v;
    }
  }

  while (next_line()) {
    std::istringstream ls(line);
    Sample s;
    if (!(ls >> s.class_id)) fail(lineno, "bad class id");
    double v;
    while (ls >> v) s.input.push_back(v);
    if (static_cast<int>(s.input.size()) != m.dimension)
      fail(lineno, "row has " + std::to_string(s.input.size()) + " values, expected " +
                       std::to_string(m.dimension));
    if (s.class_id < 0 || s.class_id >= m.class_count)
      fail(lineno, "class id " + std::to_string(s.class_id) + " out of range");
    s.id = static_cast<int64_t>(m.samples.size());
    m.samples.push_back(std::move(s));
  }
  if (declared >= 0 && declared != static_cast<int64_t>(m.samples.size()))
    throw_io(path + ": declared " + std::to_string(declared) + " samples, found " +
             std::to_string(m.samples.size()));
  validate_manifest(m);
  return m;
}

void save_columnar(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_io("cannot write dataset file: " + path);
  out << "uadce-columnar 1\n";
  out << "name " << manifest.name << "\n";
  out << "classes " << manifest.class_count << "\n";
  out << "dimension " << manifest.dimension << "\n";
  out << "samples " << manifest.samples.size() << "\n";
  out.precision(17);
  for (const Sample& s : manifest.samples) {
    out << s.class_id;
    for (double v : s.input) out << ' ' << v;
    out << '\n';
  }
  if (!out) throw_io("write failed: " + path);
}

// ---------------------------------------------------------------------------
// directory-of-binary-blobs format

DatasetManifest load_directory(const std::string& dir) {
  fs::path root(dir);
  fs::path meta_path = root / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw_io("cannot open dataset metadata: " + meta_path.string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw_io(meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "uadce-dataset")
    throw_io(meta_path.string() + ": not a uadce dataset directory");
  if (meta.value("version", 0) != 1)
    throw_io(meta_path.string() + ": unsupported version " + std::to_string(meta.value("version", 0)));

  DatasetManifest m;
  m.name = meta.value("name", "");
  m.class_count = meta.value("class_count", 0);
  m.dimension = meta.value("dimension", 0);
  std::vector<int64_t> counts = meta.value("counts", std::vector<int64_t>{});
  if (static_cast<int>(counts.size()) != m.class_count)
    throw_io(meta_path.string() + ": counts length does not match class_count");

  for (int c = 0; c < m.class_count; ++c) {
    fs::path blob = root / ("class_" + std::to_string(c) + ".bin");
    std::ifstream in(blob, std::ios::binary);
    if (!in) throw_io("cannot open class blob: " + blob.string());
    for (int64_t row = 0; row < counts[static_cast<size_t>(c)]; ++row) {
      Sample s;
      s.id = static_cast<int64_t>(m.samples.size());
      s.class_id = c;
      s.input.resize(static_cast<size_t>(m.dimension));
      for (int d = 0; d < m.dimension; ++d) s.input[d] = binio::get_f64(in, blob.string());
      m.samples.push_back(std::move(s));
    }
    char extra;
    if (in.read(&extra, 1)) throw_io(blob.string() + ": trailing bytes beyond declared rows");
  }
  validate_manifest(m);
  return m;
}

void save_directory(const DatasetManifest& manifest, const std::string& dir) {
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw_io("cannot create dataset directory: " + root.string());

  std::vector<int64_t> counts(static_cast<size_t>(manifest.class_count), 0);
  for (const Sample& s : manifest.samples) ++counts[static_cast<size_t>(s.class_id)];

  for (int c = 0; c < manifest.class_count; ++c) {
    fs::path blob = root / ("class_" + std::to_string(c) + ".bin");
    std::ofstream out(blob, std::ios::binary);
    if (!out) throw_io("cannot write class blob: " + blob.string());
    for (const Sample& s : manifest.samples)
      if (s.class_id == c)
        for (double v : s.input) binio::put_f64(out, v);
    if (!out) throw_io("write failed: " + blob.string());
  }

  json meta = {{"format", "uadce-dataset"}, {"version", 1},      {"name", manifest.name},
               {"class_count", manifest.class_count}, {"dimension", manifest.dimension},
               {"counts", counts}};
  std::ofstream meta_out(root / "meta.json");
  if (!meta_out) throw_io("cannot write dataset metadata: " + (root / "meta.json").string());
  meta_out << meta.dump(2) << "\n";
}

void write_stream_index(const SessionStream& stream, const std::string& path) {
  json doc;
  doc["dataset"] = stream.manifest.name;
  doc["class_count"] = stream.manifest.class_count;
  doc["dimension"] = stream.manifest.dimension;
  doc["protocol"] = {{"base_class_count", stream.config.base_class_count},
                     {"n_way", stream.config.n_way},
                     {"k_shot", stream.config.k_shot},
                     {"session_count", stream.config.session_count},
                     {"unlabeled_pool_size", stream.config.unlabeled_pool_size},
                     {"seed", stream.config.seed},
                     {"train_fraction", stream.config.train_fraction},
                     {"cross_session_distractors", stream.config.cross_session_distractors}};
  doc["sessions"] = json::array();
  for (const SessionSpec& s : stream.sessions) {
    doc["sessions"].push_back({{"index", s.index},
                               {"classes", s.class_ids},
                               {"labeled", s.labeled},
                               {"unlabeled", s.unlabeled},
                               {"test", s.test}});
  }
  std::ofstream out(path);
  if (!out) throw_io("cannot write stream index: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw_io("write failed: " + path);
}

}  // namespace uadce
