#include "svlab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace svlab {

namespace {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint64_t Rng::next_u64() { return splitmix64(state_); }

uint64_t Rng::next_below(uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::next_below: bound must be positive");
  uint64_t threshold = -bound % bound;  // 2^64 mod bound
  for (;;) {
    uint64_t x = next_u64();
    if (x >= threshold) return x % bound;
  }
}

double Rng::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method.
  for (;;) {
    double u = 2.0 * next_uniform() - 1.0;
    double v = 2.0 * next_uniform() - 1.0;
    double s = u * u + v * v;
    if (s <= 0.0 || s >= 1.0) continue;
    double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    have_spare_ = true;
    return u * factor;
  }
}

uint64_t derive_seed(uint64_t base, std::string_view label) {
  uint64_t state = base ^ fnv1a(label);
  return splitmix64(state);
}

uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t index) {
  uint64_t state = derive_seed(base, label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(state);
}

}  // namespace svlab
