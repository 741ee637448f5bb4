#pragma once

#include <cstdint>
#include <random>

#include "scdiff/tensor.hpp"

namespace scdiff {

// Standard normal CDF and its inverse (Acklam's approximation plus one
// Halley refinement, accurate to ~1e-15).
double std_normal_cdf(double z);
double std_normal_inv_cdf(double p);

uint64_t splitmix64(uint64_t x);

// Deterministic value-semantic RNG. normal() uses Box-Muller on the raw
// uniform stream so the sequence does not depend on the C++ library version.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Independent stream derived from (seed, stream id).
  static Rng substream(uint64_t seed, uint64_t stream) {
    return Rng(splitmix64(seed) ^ splitmix64(stream * 0xbf58476d1ce4e5b9ull + 1));
  }

  double uniform() {  // [0, 1)
    return (eng_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t bits() { return eng_(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(bits() % n); }

  Tensor normal_tensor(std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * normal();
    return t;
  }
  Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = uniform(lo, hi);
    return t;
  }
  Tensor rademacher_tensor(std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = (bits() & 1) ? 1.0 : -1.0;
    return t;
  }

  // Fisher-Yates draw of k distinct indices from [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 eng_;
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace scdiff
