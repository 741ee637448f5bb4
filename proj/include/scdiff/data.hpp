#pragma once

#include <string>

#include "scdiff/constraints.hpp"
#include "scdiff/io.hpp"
#include "scdiff/rng.hpp"

namespace scdiff {

// Sample set in raw data space, one flattened sample per row, with the
// per-channel statistics used to move between raw and normalized space.
struct Dataset {
  std::vector<std::size_t> sample_shape;  // {2} or {channels, n, n}
  Tensor samples;                         // (N, dim)
  std::vector<double> channel_mean, channel_std;
  std::string descriptor;
  Json manifest;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return Tensor::numel_of(sample_shape); }
  std::size_t channels() const {
    return sample_shape.empty() ? 1 : sample_shape[0];
  }

  // Population statistics per channel over the whole set. Errors on a
  // constant channel, which cannot be normalized.
  void compute_stats();
  Tensor normalized() const;
  Tensor normalize_rows(const Tensor& raw) const;
  Tensor denormalize(const Tensor& normalized) const;
};

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// theta ~ Uniform[0, 2pi), points (cos theta, sin theta).
Dataset sample_unit_circle(std::size_t n, Rng& rng);

// Circle with a smooth radial dent centered at theta = pi/2:
// r = 1 - 0.25 b(u) (1 + 0.6 (1 - 2 u^2)), u = wrap(theta - pi/2) / 1.2,
// b(u) = (1 - u^2)^5 inside |u| < 1 and 0 outside.
double dent_radius(double theta);
Dataset sample_dent(std::size_t n, Rng& rng);

// Unit circle with every point at angle phi in (-alpha, alpha) having its x
// coordinate projected to cos(alpha); y is kept. alpha in [0, pi].
Dataset sample_chop(std::size_t n, double alpha, Rng& rng);

// Stationary Gaussian random field with squared-exponential covariance at
// the given length scale, synthesized as a random-Fourier mode sum.
Tensor gaussian_random_field(const GridSpec& grid, double length_scale,
                             std::size_t n_modes, Rng& rng);

// Permeability K = exp(G) and the pressure solving div(K grad p) = -f with
// zero-flux boundaries and a mean-zero gauge; channels (K, p).
Dataset gen_darcy_dataset(std::size_t n_samples, const GridSpec& grid,
                          const DarcySource& src, double length_scale, Rng& rng);

// Source a as a random field and u solving (lap + k^2) u = a with zero
// Dirichlet boundaries; channels (u, a).
Dataset gen_helmholtz_dataset(std::size_t n_samples, const GridSpec& grid,
                              double k, Rng& rng);

}  // namespace scdiff
