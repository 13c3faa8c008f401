#pragma once

#include <cstdint>
#include <random>

namespace modeforge {

// All randomness in the toolkit flows through this generator so that a run is
// reproducible byte-for-byte from its seed on any platform.  mt19937_64 output
// is fully specified by the C++ standard; the uniform and Poisson mappings
// below are fixed here because the std distributions are not portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Poisson sample: product-of-uniforms inversion for small mean, the
  // transformed-rejection (PTRS) method for large mean.
  long long poisson(double mean);

  // Independent generator derived from (seed, stream); streams with distinct
  // ids never share state.
  [[nodiscard]] Rng stream(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

// splitmix64 step, used only for seed derivation.
std::uint64_t mix64(std::uint64_t x);

}  // namespace modeforge
