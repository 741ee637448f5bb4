#include "scdiff/schedule.hpp"

#include <stdexcept>

namespace scdiff {

Tensor noising(const Tensor& x0, double sigma, const Tensor& eps) {
  if (sigma < 0) throw std::invalid_argument("noising: sigma must be >= 0");
  if (!x0.same_shape(eps)) throw std::invalid_argument("noising: shape mismatch");
  Tensor out = x0;
  for (std::size_t i = 0; i < out.numel(); i++) out.data[i] += sigma * eps.data[i];
  return out;
}

double sample_noise_level(const NoiseLevelDist& dist, Rng& rng) {
  double zmin = (dist.ln_min - dist.mu) / dist.s;
  if (zmin >= 6.0)
    throw std::invalid_argument("sample_noise_level: degenerate support");
  double pmin = std_normal_cdf(zmin);
  double u = rng.uniform();
  // Map u into the surviving CDF interval; clamp away from the endpoints so
  // the inverse CDF stays finite.
  double p = pmin + u * (1.0 - pmin);
  p = std::min(p, 1.0 - 1e-16);
  p = std::max(p, pmin);
  double z = std_normal_inv_cdf(p);
  double ln_sigma = std::max(dist.mu + dist.s * z, dist.ln_min);
  return std::exp(ln_sigma);
}

double loss_weight(double sigma, double sigma_data) {
  if (sigma <= 0 || sigma_data <= 0)
    throw std::invalid_argument("loss_weight: sigma and sigma_data must be > 0");
  double sd = sigma * sigma_data;
  return (sigma * sigma + sigma_data * sigma_data) / (sd * sd);
}

std::vector<double> karras_time_grid(const NoiseSchedule& sched,
                                     std::size_t n_steps) {
  if (n_steps < 1)
    throw std::invalid_argument("karras_time_grid: n_steps must be >= 1");
  if (!(sched.sigma_min > 0) || !(sched.sigma_max > sched.sigma_min))
    throw std::invalid_argument("karras_time_grid: need 0 < sigma_min < sigma_max");
  std::vector<double> grid(n_steps + 1, 0.0);
  double inv_rho = 1.0 / sched.rho;
  double hi = std::pow(sched.sigma_max, inv_rho);
  double lo = std::pow(sched.sigma_min, inv_rho);
  for (std::size_t i = 0; i < n_steps; i++) {
    double t = n_steps == 1 ? 0.0 : double(i) / double(n_steps - 1);
    grid[i] = std::pow(hi + t * (lo - hi), sched.rho);
  }
  grid[n_steps] = 0.0;
  return grid;
}

double truncated_lognormal_mean(const NoiseLevelDist& dist) {
  double a = (dist.ln_min - dist.mu) / dist.s;
  double keep = 1.0 - std_normal_cdf(a);
  double shifted = 1.0 - std_normal_cdf(a - dist.s);
  return std::exp(dist.mu + 0.5 * dist.s * dist.s) * shifted / keep;
}

}  // namespace scdiff
