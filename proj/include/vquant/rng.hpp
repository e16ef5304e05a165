#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vquant/errors.hpp"
#include "vquant/tensor.hpp"

namespace vquant {

// Deterministic 64-bit stream based on splitmix64 (Steele, Lea & Flood's
// SplittableRandom finalizer). Pure integer arithmetic, so two streams with
// the same seed produce identical draws on every platform. Reference vectors
// are frozen in docs/FORMATS.md and tests/test_tensor.cpp.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 significant bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1); safe as a log/logit argument.
  double next_open_unit() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  // Standard normal via Box-Muller; consumes exactly two u64 draws.
  double next_gaussian() {
    double u1 = next_open_unit();
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, bound) by rejection; bound must be positive.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

 private:
  std::uint64_t state_;
};

struct Distribution {
  enum class Kind { Uniform, Gaussian, Laplace, Lognormal };

  Kind kind = Kind::Uniform;
  double p0 = 0.0;  // uniform: lower bound; others: location mu
  double p1 = 1.0;  // uniform: upper bound; gaussian/lognormal: sigma; laplace: scale b

  static Distribution uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static Distribution gaussian(double mu, double sigma) { return {Kind::Gaussian, mu, sigma}; }
  static Distribution laplace(double mu, double scale) { return {Kind::Laplace, mu, scale}; }
  static Distribution lognormal(double mu, double sigma) { return {Kind::Lognormal, mu, sigma}; }

  void validate() const {
    switch (kind) {
      case Kind::Uniform:
        if (!(p0 <= p1)) throw ConfigError("uniform distribution requires lower <= upper");
        break;
      case Kind::Gaussian:
      case Kind::Lognormal:
        if (!(p1 > 0.0)) throw ConfigError("sigma must be positive");
        break;
      case Kind::Laplace:
        if (!(p1 > 0.0)) throw ConfigError("laplace scale must be positive");
        break;
    }
  }

  double draw(RngStream& rng) const {
    switch (kind) {
      case Kind::Uniform:
        return p0 + rng.next_unit() * (p1 - p0);
      case Kind::Gaussian:
        return p0 + p1 * rng.next_gaussian();
      case Kind::Laplace: {
        // Inverse CDF on u in (0,1).
        double u = rng.next_open_unit() - 0.5;
        double s = (u < 0.0) ? -1.0 : 1.0;
        return p0 - p1 * s * std::log(1.0 - 2.0 * std::fabs(u));
      }
      case Kind::Lognormal:
        return std::exp(p0 + p1 * rng.next_gaussian());
    }
    throw ConfigError("unknown distribution kind");
  }
};

// Deterministic tensor sampling: the same seed yields the same tensor.
inline DenseTensor sample(const Distribution& dist, std::vector<std::size_t> shape,
                          RngStream& rng) {
  dist.validate();
  std::size_t n = shape_elements(shape);
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(dist.draw(rng));
  DenseTensor t(std::move(shape), std::move(data));
  t.require_finite("sample");
  return t;
}

inline DenseTensor sample(const Distribution& dist, std::vector<std::size_t> shape,
                          std::uint64_t seed) {
  RngStream rng(seed);
  return sample(dist, std::move(shape), rng);
}

}  // namespace vquant
