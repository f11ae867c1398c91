#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace uadce::rng {

// splitmix64 step; used to derive independent stream seeds from one root seed.
uint64_t splitmix64(uint64_t& state);

// Deterministic seed for a named stream. Streams are independent of each
// other and of call order; (a, b) index per-session / per-sample substreams.
uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t a = 0, uint64_t b = 0);

// mt19937_64 wrapper with hand-rolled draws. The standard distributions are
// not byte-stable across library implementations, and run determinism is a
// hard requirement, so uniform/normal/shuffle are implemented here.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  // Uniform integer in [0, n); n must be > 0. Rejection sampling, unbiased.
  uint64_t uniform_index(uint64_t n);

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates; identical results on every platform.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(uniform_index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uadce::rng
