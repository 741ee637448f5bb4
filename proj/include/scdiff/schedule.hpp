#pragma once

#include "scdiff/rng.hpp"
#include "scdiff/tensor.hpp"

namespace scdiff {

// Identity schedule sigma(t) = t throughout; noise level and time coincide.
struct NoiseSchedule {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double sigma_data = 1.0;  // estimated from the training split
  double rho = 7.0;
};

// Noise-level distribution: ln sigma ~ Normal(mu, s^2) truncated below at
// ln_min. An effectively untruncated log-normal uses ln_min = mu - 12 s.
struct NoiseLevelDist {
  double mu = -2.0;
  double s = 1.7;
  double ln_min = -4.0;
};

// x0 + sigma * eps, shapes must match.
Tensor noising(const Tensor& x0, double sigma, const Tensor& eps);

// Inverse-CDF draw from the truncated distribution. Never returns a value
// below exp(ln_min).
double sample_noise_level(const NoiseLevelDist& dist, Rng& rng);

// w(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2
double loss_weight(double sigma, double sigma_data);

// Descending sigma levels with the rho-warped spacing, exact 0 appended:
// n_steps + 1 values. n_steps = 1 gives {sigma_max, 0}.
std::vector<double> karras_time_grid(const NoiseSchedule& sched,
                                     std::size_t n_steps);

// Mean of exp(X) for X ~ Normal(mu, s^2) truncated below at ln_min.
double truncated_lognormal_mean(const NoiseLevelDist& dist);

}  // namespace scdiff
