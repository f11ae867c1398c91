#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uadce {

struct Sample {
  int64_t id = 0;  // position in the manifest; stable sample identity
  int class_id = 0;
  std::vector<double> input;
};

struct DatasetManifest {
  std::string name;
  int class_count = 0;
  int dimension = 0;
  std::vector<Sample> samples;  // samples[i].id == i

  const Sample& sample(int64_t id) const;
};

struct ProtocolConfig {
  int base_class_count = 0;
  int n_way = 0;   // N
  int k_shot = 0;  // K
  int session_count = 0;
  int unlabeled_pool_size = 0;  // M, >= 0
  uint64_t seed = 0;
  double train_fraction = 5.0 / 6.0;
  bool cross_session_distractors = false;
};

// One curriculum step. Sample ids index into the stream's manifest.
struct SessionSpec {
  int index = 0;                  // 1-based
  std::vector<int> class_ids;     // C_i, ascending
  std::vector<int64_t> labeled;   // base: all train items of base classes; else N*K shots
  std::vector<int64_t> unlabeled; // pool, <= M, empty for session 1
  std::vector<int64_t> test;      // cumulative over C_1..C_i
};

struct SessionStream {
  DatasetManifest manifest;
  ProtocolConfig config;
  std::vector<SessionSpec> sessions;
};

struct SyntheticSpec {
  std::string name = "synthetic";
  int class_count = 0;
  int samples_per_class = 0;
  int dimension = 0;
  double separation = 0.0;
  uint64_t seed = 0;
};

// Gaussian clusters with unit variance; class means sit separation apart
// (pairwise-adjacent on a circle in the first two dimensions, or on a line
// when dimension == 1).
DatasetManifest synthetic_manifest(const SyntheticSpec& spec);

// Splits each class train/test, assigns base + N-way sessions, draws K shots
// and the unlabeled pool per incremental session. Deterministic in
// config.seed.
SessionStream build_benchmark(DatasetManifest manifest, const ProtocolConfig& config);

// Columnar text format: header lines then one "class_id v0 v1 ..." row per
// sample.
DatasetManifest load_columnar(const std::string& path);
void save_columnar(const DatasetManifest& manifest, const std::string& path);

// Directory layout: meta.json + one class_<k>.bin of little-endian float64
// rows per class.
DatasetManifest load_directory(const std::string& dir);
void save_directory(const DatasetManifest& manifest, const std::string& dir);

// JSON index of sample ids per session/role, for reproducibility audits.
void write_stream_index(const SessionStream& stream, const std::string& path);

}  // namespace uadce
