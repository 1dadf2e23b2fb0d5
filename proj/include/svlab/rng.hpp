// Deterministic random streams and seed fanout.
#pragma once

#include <cstdint>
#include <string_view>

namespace svlab {

// splitmix64-based generator. The integer path is platform-stable; normal
// draws use the Marsaglia polar method (sqrt/log only, no trig).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  // Unbiased integer in [0, bound) via rejection sampling. bound must be > 0.
  uint64_t next_below(uint64_t bound);
  // Uniform double in [0, 1) with 53 bits of precision.
  double next_uniform();
  // Standard normal draw.
  double next_normal();

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a label, so that
// adding a new consumer never shifts the streams of existing ones.
uint64_t derive_seed(uint64_t base, std::string_view label);
uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t index);

}  // namespace svlab
