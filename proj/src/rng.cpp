#include "modeforge/rng.hpp"

#include <cmath>

#include "modeforge/errors.hpp"

namespace modeforge {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t stream_id) const {
  return Rng(mix64(seed_ ^ mix64(stream_id)));
}

long long Rng::poisson(double mean) {
  require(mean >= 0.0 && std::isfinite(mean), ErrorKind::Invalid,
          "poisson mean must be finite and nonnegative");
  if (mean == 0.0) return 0;

  if (mean < 10.0) {
    // Multiplicative inversion: count uniforms until their product drops
    // below e^{-mean}.
    const double limit = std::exp(-mean);
    long long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  // Transformed rejection with squeeze (Hoermann's PTRS).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const double lhs =
        std::log(v * inv_alpha / (a / (us * us) + b));
    const double rhs = -mean + kf * loglam - std::lgamma(kf + 1.0);
    if (lhs <= rhs) return static_cast<long long>(kf);
  }
}

}  // namespace modeforge
