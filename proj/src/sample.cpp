#include "scdiff/sample.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace scdiff {

ScoreFn model_score(const DenoiserModel& model) {
  return [model](const Tensor& x, double sigma) {
    Tensor d = model.denoise(x, sigma);
    double inv = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < d.numel(); i++)
      d.data[i] = (d.data[i] - x.data[i]) * inv;
    return d;
  };
}

DenoiserOps ops_of(const DenoiserModel& model) {
  DenoiserOps ops;
  ops.dim = model.dim();
  ops.denoise = [model](const Tensor& x, double sigma) {
    return model.denoise(x, sigma);
  };
  ops.vjp = [model](const Tensor& x, double sigma, const Tensor& cot) {
    return model.denoise_vjp(x, sigma, cot);
  };
  return ops;
}

namespace {

void check_guidable(const DenoiserModel& model, bool allow_scd) {
  if (model.variant == Variant::scd && !allow_scd)
    throw std::invalid_argument(
        "guidance on a softly constrained model is rejected by default; "
        "override explicitly to stack them");
}

Rng frozen_rng(uint64_t seed, double sigma) {
  return Rng::substream(seed, splitmix64(std::bit_cast<uint64_t>(sigma)));
}

}  // namespace

Tensor lgd_correction(const DenoiserModel& model, const ConstraintField& field,
                      const Tensor& x, double sigma, std::size_t m_samples,
                      double sigma_post, uint64_t seed) {
  if (m_samples == 0)
    throw std::invalid_argument("lgd: needs at least one posterior sample");
  Tensor d = model.denoise(x, sigma);
  std::size_t batch = d.rows(), dim = d.cols();
  Rng rng = frozen_rng(seed, sigma);

  // log l_c of every posterior draw, then softmax weights per row
  std::vector<Tensor> draws;
  draws.reserve(m_samples);
  for (std::size_t m = 0; m < m_samples; m++) {
    Tensor xm = d;
    if (sigma_post != 0.0)
      for (double& v : xm.data) v += sigma_post * rng.normal();
    else
      for (std::size_t i = 0; i < xm.numel(); i++) rng.normal();
    draws.push_back(std::move(xm));
  }

  Tensor cot({batch, dim});
  std::vector<double> logw(m_samples);
  for (std::size_t i = 0; i < batch; i++) {
    double lse_max = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < m_samples; m++) {
      logw[m] = field.log_lc(draws[m].row_as(i, {dim}));
      lse_max = std::max(lse_max, logw[m]);
    }
    double z = 0;
    for (std::size_t m = 0; m < m_samples; m++) {
      logw[m] = std::exp(logw[m] - lse_max);
      z += logw[m];
    }
    for (std::size_t m = 0; m < m_samples; m++) {
      double w = logw[m] / z;
      Tensor g = field.grad_log_lc(draws[m].row_as(i, {dim}));
      for (std::size_t j = 0; j < dim; j++) cot.at2(i, j) += w * g.data[j];
    }
  }
  return model.denoise_vjp(x, sigma, cot);
}

Tensor dps_correction(const DenoiserModel& model, const ConstraintField& field,
                      const Tensor& x, double sigma) {
  Tensor d = model.denoise(x, sigma);
  std::size_t batch = d.rows(), dim = d.cols();
  Tensor cot({batch, dim});
  for (std::size_t i = 0; i < batch; i++) {
    Tensor g = field.grad_log_lc(d.row_as(i, {dim}));
    for (std::size_t j = 0; j < dim; j++) cot.at2(i, j) = g.data[j];
  }
  return model.denoise_vjp(x, sigma, cot);
}

ScoreFn dps_guided_score(const DenoiserModel& model,
                         std::shared_ptr<const ConstraintField> field,
                         double guidance_scale, bool allow_scd) {
  check_guidable(model, allow_scd);
  if (!field) throw std::invalid_argument("guidance requires a constraint field");
  ScoreFn base = model_score(model);
  return [model, field, guidance_scale, base](const Tensor& x, double sigma) {
    Tensor s = base(x, sigma);
    Tensor c = dps_correction(model, *field, x, sigma);
    for (std::size_t i = 0; i < s.numel(); i++)
      s.data[i] += guidance_scale * c.data[i];
    return s;
  };
}

ScoreFn lgd_guided_score(const DenoiserModel& model,
                         std::shared_ptr<const ConstraintField> field,
                         std::size_t m_samples, uint64_t seed,
                         double guidance_scale, bool allow_scd) {
  check_guidable(model, allow_scd);
  if (!field) throw std::invalid_argument("guidance requires a constraint field");
  if (m_samples == 0)
    throw std::invalid_argument("lgd: needs at least one posterior sample");
  ScoreFn base = model_score(model);
  return [model, field, m_samples, seed, guidance_scale, base](const Tensor& x,
                                                               double sigma) {
    double post2 = sigma * sigma / (1.0 + sigma * sigma);
    Tensor s = base(x, sigma);
    Tensor c = lgd_correction(model, *field, x, sigma, m_samples,
                              std::sqrt(post2), seed);
    for (std::size_t i = 0; i < s.numel(); i++)
      s.data[i] += guidance_scale * c.data[i];
    return s;
  };
}

Tensor heun_sample_from(const ScoreFn& score, const NoiseSchedule& sched,
                        std::size_t n_steps, Tensor x) {
  std::vector<double> grid = karras_time_grid(sched, n_steps);
  for (std::size_t i = 0; i + 1 < grid.size(); i++) {
    double t = grid[i], t1 = grid[i + 1];
    double h = t1 - t;
    Tensor s = score(x, t);
    Tensor d1 = x;
    for (std::size_t k = 0; k < x.numel(); k++)
      d1.data[k] = -t * s.data[k];  // dx/dt = -t score
    if (t1 == 0.0) {
      for (std::size_t k = 0; k < x.numel(); k++) x.data[k] += h * d1.data[k];
    } else {
      Tensor xe = x;
      for (std::size_t k = 0; k < x.numel(); k++) xe.data[k] += h * d1.data[k];
      Tensor s2 = score(xe, t1);
      for (std::size_t k = 0; k < x.numel(); k++)
        x.data[k] += 0.5 * h * (d1.data[k] - t1 * s2.data[k]);
    }
    if (!x.all_finite())
      throw std::runtime_error("sampler: non-finite state at step " +
                               std::to_string(i) + " (sigma " +
                               std::to_string(t1) + ")");
  }
  return x;
}

Tensor heun_sample(const ScoreFn& score, const NoiseSchedule& sched,
                   std::size_t n_steps, std::size_t batch, std::size_t dim,
                   Rng& rng) {
  return heun_sample_from(score, sched, n_steps,
                          rng.normal_tensor({batch, dim}, sched.sigma_max));
}

namespace {

// Divergence of the flow drift f(x, t) = (x - D) / t per batch row.
using DivFn = std::function<std::vector<double>(const Tensor&, double)>;

std::vector<double> integrate_nll(const std::function<Tensor(const Tensor&, double)>& drift,
                                  const DivFn& div, const NoiseSchedule& sched,
                                  Tensor x, const NllConfig& cfg) {
  std::size_t batch = x.rows(), dim = x.cols();
  std::vector<double> grid = karras_time_grid(sched, cfg.n_steps);
  grid.pop_back();                        // drop the exact 0
  std::vector<double> ts(grid.rbegin(), grid.rend());  // ascending sigma

  std::vector<double> logdet(batch, 0.0);
  for (std::size_t i = 0; i + 1 < ts.size(); i++) {
    double t = ts[i], t1 = ts[i + 1], h = t1 - t;
    Tensor d1 = drift(x, t);
    std::vector<double> v1 = div(x, t);
    Tensor xe = x;
    for (std::size_t k = 0; k < x.numel(); k++) xe.data[k] += h * d1.data[k];
    Tensor d2 = drift(xe, t1);
    std::vector<double> v2 = div(xe, t1);
    for (std::size_t k = 0; k < x.numel(); k++)
      x.data[k] += 0.5 * h * (d1.data[k] + d2.data[k]);
    for (std::size_t b = 0; b < batch; b++)
      logdet[b] += 0.5 * h * (v1[b] + v2[b]);
    if (!x.all_finite())
      throw std::runtime_error("nll: non-finite state at step " +
                               std::to_string(i));
  }

  const double log2pi = std::log(2.0 * 3.14159265358979323846);
  double s2 = sched.sigma_max * sched.sigma_max;
  std::vector<double> bits(batch);
  for (std::size_t b = 0; b < batch; b++) {
    double sq = 0;
    for (std::size_t j = 0; j < dim; j++) {
      double v = x.at2(b, j);
      sq += v * v;
    }
    double logp_T = -0.5 * double(dim) * (log2pi + std::log(s2)) - sq / (2.0 * s2);
    double logp = logp_T + logdet[b];
    bits[b] = -logp / (double(dim) * std::log(2.0));
  }
  return bits;
}

std::vector<Tensor> draw_probes(std::size_t count, std::size_t batch,
                                std::size_t dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> probes;
  probes.reserve(count);
  for (std::size_t k = 0; k < count; k++)
    probes.push_back(rng.rademacher_tensor({batch, dim}));
  return probes;
}

}  // namespace

std::vector<double> nll_bits_per_dim(const DenoiserOps& ops,
                                     const NoiseSchedule& sched, const Tensor& x0,
                                     const NllConfig& cfg) {
  if (x0.rank() != 2 || x0.cols() != ops.dim)
    throw std::invalid_argument("nll: x0 must be (batch, dim)");
  if (cfg.mode == DivergenceMode::finite_difference)
    throw std::invalid_argument(
        "nll: finite-difference divergence runs on a score field, not denoiser ops");
  std::size_t batch = x0.rows(), dim = ops.dim;

  auto drift = [&ops](const Tensor& x, double t) {
    Tensor d = ops.denoise(x, t);
    for (std::size_t k = 0; k < d.numel(); k++)
      d.data[k] = (x.data[k] - d.data[k]) / t;
    return d;
  };

  DivFn div;
  if (cfg.mode == DivergenceMode::exact) {
    div = [&ops, batch, dim](const Tensor& x, double t) {
      std::vector<double> tr(batch, 0.0);
      for (std::size_t j = 0; j < dim; j++) {
        Tensor cot({batch, dim});
        for (std::size_t b = 0; b < batch; b++) cot.at2(b, j) = 1.0;
        Tensor v = ops.vjp(x, t, cot);
        for (std::size_t b = 0; b < batch; b++) tr[b] += v.at2(b, j);
      }
      for (double& v : tr) v = (double(dim) - v) / t;
      return tr;
    };
  } else {
    auto probes = draw_probes(cfg.probes, batch, dim, cfg.seed);
    div = [&ops, probes, batch, dim](const Tensor& x, double t) {
      std::vector<double> tr(batch, 0.0);
      for (const Tensor& p : probes) {
        Tensor v = ops.vjp(x, t, p);
        for (std::size_t b = 0; b < batch; b++)
          for (std::size_t j = 0; j < dim; j++) tr[b] += v.at2(b, j) * p.at2(b, j);
      }
      for (double& v : tr)
        v = (double(dim) - v / double(probes.size())) / t;
      return tr;
    };
  }
  return integrate_nll(drift, div, sched, x0, cfg);
}

std::vector<double> nll_bits_per_dim(const ScoreFn& score,
                                     const NoiseSchedule& sched, const Tensor& x0,
                                     const NllConfig& cfg) {
  if (x0.rank() != 2) throw std::invalid_argument("nll: x0 must be (batch, dim)");
  if (cfg.mode != DivergenceMode::finite_difference)
    throw std::invalid_argument(
        "nll: score-field likelihoods use finite-difference divergence");
  std::size_t batch = x0.rows(), dim = x0.cols();

  auto drift = [&score](const Tensor& x, double t) {
    Tensor s = score(x, t);
    for (std::size_t k = 0; k < s.numel(); k++) s.data[k] *= -t;
    return s;
  };

  auto probes = draw_probes(cfg.probes, batch, dim, cfg.seed);
  double eps = cfg.fd_eps;
  DivFn div = [&drift, probes, batch, dim, eps](const Tensor& x, double t) {
    std::vector<double> tr(batch, 0.0);
    for (const Tensor& p : probes) {
      Tensor xp = x, xm = x;
      for (std::size_t k = 0; k < x.numel(); k++) {
        xp.data[k] += eps * p.data[k];
        xm.data[k] -= eps * p.data[k];
      }
      Tensor fp = drift(xp, t);
      Tensor fm = drift(xm, t);
      for (std::size_t b = 0; b < batch; b++)
        for (std::size_t j = 0; j < dim; j++)
          tr[b] += (fp.at2(b, j) - fm.at2(b, j)) / (2.0 * eps) * p.at2(b, j);
    }
    for (double& v : tr) v /= double(probes.size());
    return tr;
  };
  return integrate_nll(drift, div, sched, x0, cfg);
}

}  // namespace scdiff
