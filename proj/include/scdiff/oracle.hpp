#pragma once

#include "scdiff/constraints.hpp"
#include "scdiff/rng.hpp"
#include "scdiff/tensor.hpp"

namespace scdiff {

// Gaussian data N(m0, s0^2 I) with a linear scalar residual a'y - b, the one
// configuration where the regularized denoiser optimum has a closed form.
struct GaussianLinearSetup {
  Tensor m0;
  double s0 = 1.0;
  Tensor a;  // unit direction
  double b = 0.0;
  double lambda = 0.0;
  double sigma = 1.0;

  std::size_t dim() const { return m0.numel(); }
  void validate() const;
};

// E[x0 | x_t] = (s0^2 x_t + sigma^2 m0) / (s0^2 + sigma^2), rowwise.
Tensor posterior_mean(const GaussianLinearSetup& setup, const Tensor& x_t);

// Minimizer of ||y - E[x0|x_t]||^2 + lambda (a'y - b)^2 by Sherman-Morrison:
// y* = mu - [lambda (a'mu - b) / (1 + lambda)] a.
Tensor regularized_optimum(const GaussianLinearSetup& setup, const Tensor& x_t);

// E||y* - mu||^2 over x_t ~ N(m0, (s0^2+sigma^2) I) in closed form:
// (lambda/(1+lambda))^2 [ (a'm0 - b)^2 + s0^4/(s0^2+sigma^2) ].
double expected_shift_sq(const GaussianLinearSetup& setup);

// Damped fixed-point solve of the stationarity equation
// y = mu - (lambda/2) grad ||R(y)||^2 for a general residual field.
Tensor regularized_fixed_point(const ConstraintField& field, double lambda,
                               const Tensor& mu, double damping = 0.5,
                               double tol = 1e-10, std::size_t max_iters = 100000);

struct Prop1Report {
  double lambda = 0, sigma = 0;
  double max_rel_deviation = 0;
  std::size_t train_iters = 0;
  double final_loss = 0;
};

// Trains a small denoiser at fixed sigma on streaming Gaussian batches with
// the unweighted regularized loss, then compares it to the closed-form
// optimum on frozen probe points.
Prop1Report verify_prop1(const GaussianLinearSetup& setup,
                         std::size_t train_iters, Rng& rng);

struct Prop2Report {
  double lambda = 0, sigma = 0;
  double mse_gap = 0;     // E||y*-x0||^2 - E||mu-x0||^2
  double shift_sq = 0;    // E||y*-mu||^2
  double ratio = 0;       // gap / shift^2, 1 when both vanish
  std::size_t n_pairs = 0;
};

// Monte Carlo check that the excess denoising MSE of the regularized optimum
// equals the squared shift away from the posterior mean.
Prop2Report verify_prop2(const GaussianLinearSetup& setup, std::size_t n_pairs,
                         Rng& rng);

}  // namespace scdiff
