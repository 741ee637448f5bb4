#pragma once

#include <functional>
#include <memory>

#include "scdiff/denoiser.hpp"
#include "scdiff/schedule.hpp"

namespace scdiff {

// Batched score field: (batch, dim) x sigma -> (batch, dim).
using ScoreFn = std::function<Tensor(const Tensor&, double)>;

// score(x, sigma) = (D(x, sigma) - x) / sigma^2
ScoreFn model_score(const DenoiserModel& model);

// Denoiser evaluation plus its vector-Jacobian product, the two operations
// the likelihood integrator needs. Closed-form denoisers plug in here too.
struct DenoiserOps {
  std::size_t dim = 0;
  std::function<Tensor(const Tensor&, double)> denoise;
  std::function<Tensor(const Tensor&, double, const Tensor&)> vjp;
};
DenoiserOps ops_of(const DenoiserModel& model);

// Posterior-sample guidance correction: one VJP through the denoiser seeded
// with the softmax-weighted constraint gradient over M posterior draws
// x0^m = D + sigma_post eps_m. The draws depend only on (seed, sigma), so a
// repeated call at the same noise level sees frozen noise.
Tensor lgd_correction(const DenoiserModel& model, const ConstraintField& field,
                      const Tensor& x, double sigma, std::size_t m_samples,
                      double sigma_post, uint64_t seed);

// M = 1 and sigma_post = 0 collapse to the plain chain rule through the
// denoiser mean, which is exactly this correction.
Tensor dps_correction(const DenoiserModel& model, const ConstraintField& field,
                      const Tensor& x, double sigma);

// Guided score factories. Softly constrained models already carry their
// correction inside D, so stacking guidance on top is rejected unless
// explicitly allowed.
ScoreFn dps_guided_score(const DenoiserModel& model,
                         std::shared_ptr<const ConstraintField> field,
                         double guidance_scale = 1.0, bool allow_scd = false);
// sigma_post^2 = sigma^2 / (1 + sigma^2)
ScoreFn lgd_guided_score(const DenoiserModel& model,
                         std::shared_ptr<const ConstraintField> field,
                         std::size_t m_samples, uint64_t seed,
                         double guidance_scale = 1.0, bool allow_scd = false);

// Deterministic probability-flow sampler on the descending noise grid:
// second-order Heun steps with a plain Euler step into sigma = 0.
// Throws naming the step if the state stops being finite.
Tensor heun_sample_from(const ScoreFn& score, const NoiseSchedule& sched,
                        std::size_t n_steps, Tensor x);
// x drawn from N(0, sigma_max^2 I).
Tensor heun_sample(const ScoreFn& score, const NoiseSchedule& sched,
                   std::size_t n_steps, std::size_t batch, std::size_t dim,
                   Rng& rng);

enum class DivergenceMode { exact, rademacher, finite_difference };

struct NllConfig {
  std::size_t n_steps = 200;
  DivergenceMode mode = DivergenceMode::exact;
  std::size_t probes = 8;    // rademacher / finite_difference
  double fd_eps = 1e-4;      // finite_difference probe step
  uint64_t seed = 0;         // probe draws
};

// Negative log likelihood in bits per dimension, one value per row of x0.
// The probability-flow ODE runs from sigma_min to sigma_max with Heun steps
// on the state and the accumulated divergence; the terminal density is
// N(0, sigma_max^2 I). exact divergence costs dim VJPs per evaluation and is
// meant for small dim; rademacher uses cfg.probes VJP probes.
std::vector<double> nll_bits_per_dim(const DenoiserOps& ops,
                                     const NoiseSchedule& sched, const Tensor& x0,
                                     const NllConfig& cfg);
// Finite-difference divergence of the flow built from an arbitrary score
// field (guided scores have no plain VJP form).
std::vector<double> nll_bits_per_dim(const ScoreFn& score,
                                     const NoiseSchedule& sched, const Tensor& x0,
                                     const NllConfig& cfg);

}  // namespace scdiff
