#include "uadce/rng.hpp"

#include <cmath>

#include "uadce/error.hpp"

namespace uadce::rng {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t a, uint64_t b) {
  uint64_t state = root ^ 0x5851f42d4c957f2dULL;
  for (unsigned char c : stream) {
    state ^= c;
    (void)splitmix64(state);
  }
  state ^= a * 0x9e3779b97f4a7c15ULL;
  (void)splitmix64(state);
  state ^= b * 0xd6e8feb86659fd93ULL;
  uint64_t out = splitmix64(state);
  // mt19937_64 treats seed 0 fine, but keep streams distinguishable from the
  // all-zero state anyway.
  return out ? out : 0x4d595df4d0f33173ULL;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::uniform_index(uint64_t n) {
  if (n == 0) throw_contract("uniform_index: n must be positive");
  if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace uadce::rng
