#include "scdiff/oracle.hpp"

#include <cmath>

#include "scdiff/denoiser.hpp"
#include "scdiff/graph.hpp"
#include "scdiff/train.hpp"

namespace scdiff {

void GaussianLinearSetup::validate() const {
  if (m0.numel() == 0 || m0.numel() > 4)
    throw std::invalid_argument("gaussian setup: dim must be 1..4");
  if (a.numel() != m0.numel())
    throw std::invalid_argument("gaussian setup: direction dim mismatch");
  double n2 = 0;
  for (double v : a.data) n2 += v * v;
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-12)
    throw std::invalid_argument("gaussian setup: direction must be unit norm");
  if (!(s0 > 0) || !(sigma > 0))
    throw std::invalid_argument("gaussian setup: s0 and sigma must be > 0");
  if (lambda < 0)
    throw std::invalid_argument("gaussian setup: lambda must be >= 0");
}

namespace {

Tensor as_rows(const Tensor& x, std::size_t d) {
  if (x.shape.size() == 2) {
    if (x.cols() != d) throw std::invalid_argument("oracle: row width mismatch");
    return x;
  }
  if (x.numel() != d) throw std::invalid_argument("oracle: value dim mismatch");
  return x.reshaped({1, d});
}

}  // namespace

Tensor posterior_mean(const GaussianLinearSetup& setup, const Tensor& x_t) {
  setup.validate();
  std::size_t d = setup.dim();
  Tensor rows = as_rows(x_t, d);
  double s2 = setup.s0 * setup.s0, g2 = setup.sigma * setup.sigma;
  Tensor out = rows;
  for (std::size_t r = 0; r < out.rows(); r++)
    for (std::size_t c = 0; c < d; c++)
      out.at2(r, c) = (s2 * rows.at2(r, c) + g2 * setup.m0.data[c]) / (s2 + g2);
  return x_t.shape.size() == 2 ? out : out.reshaped(x_t.shape);
}

Tensor regularized_optimum(const GaussianLinearSetup& setup, const Tensor& x_t) {
  std::size_t d = setup.dim();
  Tensor mu = posterior_mean(setup, x_t);
  Tensor rows = as_rows(mu, d);
  for (std::size_t r = 0; r < rows.rows(); r++) {
    double am = 0;
    for (std::size_t c = 0; c < d; c++) am += setup.a.data[c] * rows.at2(r, c);
    double shift = setup.lambda * (am - setup.b) / (1.0 + setup.lambda);
    for (std::size_t c = 0; c < d; c++)
      rows.at2(r, c) -= shift * setup.a.data[c];
  }
  return x_t.shape.size() == 2 ? rows : rows.reshaped(x_t.shape);
}

double expected_shift_sq(const GaussianLinearSetup& setup) {
  setup.validate();
  double am0 = 0;
  for (std::size_t c = 0; c < setup.dim(); c++)
    am0 += setup.a.data[c] * setup.m0.data[c];
  double s2 = setup.s0 * setup.s0, g2 = setup.sigma * setup.sigma;
  double var_amu = s2 * s2 / (s2 + g2);
  double f = setup.lambda / (1.0 + setup.lambda);
  return f * f * ((am0 - setup.b) * (am0 - setup.b) + var_amu);
}

Tensor regularized_fixed_point(const ConstraintField& field, double lambda,
                               const Tensor& mu, double damping, double tol,
                               std::size_t max_iters) {
  if (!(damping > 0 && damping <= 1))
    throw std::invalid_argument("fixed point: damping must be in (0, 1]");
  Tensor y = mu;
  for (std::size_t it = 0; it < max_iters; it++) {
    Tensor g = field.grad_sq_residual_norm(y);
    double step = 0;
    for (std::size_t i = 0; i < y.numel(); i++) {
      double target = mu.data[i] - 0.5 * lambda * g.data[i];
      double delta = target - y.data[i];
      step = std::max(step, std::abs(delta));
      y.data[i] += damping * delta;
    }
    if (!y.all_finite())
      throw std::runtime_error("fixed point: iteration diverged");
    if (step <= tol) return y;
  }
  throw std::runtime_error("fixed point: no convergence within the cap");
}

Prop1Report verify_prop1(const GaussianLinearSetup& setup,
                         std::size_t train_iters, Rng& rng) {
  setup.validate();
  if (train_iters < 1)
    throw std::invalid_argument("verify_prop1: need a positive budget");
  std::size_t d = setup.dim();
  std::uint64_t base = rng.bits();
  Rng init_rng = Rng::substream(base, 0);
  Rng data_rng = Rng::substream(base, 1);
  Rng probe_rng = Rng::substream(base, 2);

  DenoiserModel model = DenoiserModel::init(Variant::vanilla, {d}, setup.s0,
                                            nullptr, init_rng, 64, 2);
  LinearField field(setup.a, setup.b);
  AdamState adam = AdamState::init(model.params, 1e-3);
  ParamSet ema = model.params;
  const std::size_t batch = 256;
  std::vector<double> sigmas(batch, setup.sigma);
  double final_loss = 0;
  for (std::size_t iter = 1; iter <= train_iters; iter++) {
    Tensor x0({batch, d}), xt({batch, d});
    for (std::size_t r = 0; r < batch; r++)
      for (std::size_t c = 0; c < d; c++) {
        double v = setup.m0.data[c] + setup.s0 * data_rng.normal();
        x0.at2(r, c) = v;
        xt.at2(r, c) = v + setup.sigma * data_rng.normal();
      }
    Graph g;
    auto refs = leaf_all(g, model.params);
    VarRef x0r = g.constant(std::move(x0));
    VarRef xtr = g.constant(std::move(xt));
    VarRef dref = model.forward(g, refs, xtr, sigmas);
    // Unweighted fixed-sigma objective ||D - x0||^2 + lambda (a'D - b)^2,
    // whose population minimizer is the closed-form shifted optimum.
    VarRef per_row = sum_rows(g, square(g, sub(g, dref, x0r)));
    if (setup.lambda != 0)
      per_row = add(g, per_row,
                    scale(g, constraint_sq_norm(g, dref, field), setup.lambda));
    VarRef loss = mean(g, per_row);
    final_loss = g.val(loss).value();
    if (!std::isfinite(final_loss))
      throw std::runtime_error("verify_prop1: non-finite loss at iteration " +
                               std::to_string(iter));
    Gradients grads = backward(g, loss);
    std::vector<Tensor> gs;
    gs.reserve(refs.size());
    for (const VarRef& r : refs) gs.push_back(grads.of(r));
    clip_global_norm(gs, 10.0);
    adam_step(model.params, adam, gs);
    ema_update(ema, model.params, 0.99);
  }
  model.params = std::move(ema);

  // Probe points frozen per outer seed so different budgets see the same grid.
  const std::size_t n_probes = 32;
  double marginal_sd = std::sqrt(setup.s0 * setup.s0 + setup.sigma * setup.sigma);
  Tensor probes({n_probes, d});
  for (std::size_t r = 0; r < n_probes; r++)
    for (std::size_t c = 0; c < d; c++)
      probes.at2(r, c) = setup.m0.data[c] + marginal_sd * probe_rng.normal();
  Tensor want = regularized_optimum(setup, probes);
  Tensor got = model.denoise(probes, setup.sigma);
  Prop1Report rep;
  rep.lambda = setup.lambda;
  rep.sigma = setup.sigma;
  rep.train_iters = train_iters;
  rep.final_loss = final_loss;
  for (std::size_t r = 0; r < n_probes; r++) {
    double err2 = 0, ref2 = 0;
    for (std::size_t c = 0; c < d; c++) {
      double e = got.at2(r, c) - want.at2(r, c);
      err2 += e * e;
      ref2 += want.at2(r, c) * want.at2(r, c);
    }
    double rel = std::sqrt(err2) / (1.0 + std::sqrt(ref2));
    rep.max_rel_deviation = std::max(rep.max_rel_deviation, rel);
  }
  return rep;
}

Prop2Report verify_prop2(const GaussianLinearSetup& setup, std::size_t n_pairs,
                         Rng& rng) {
  setup.validate();
  if (n_pairs < 1) throw std::invalid_argument("verify_prop2: need pairs");
  std::size_t d = setup.dim();
  double gap_acc = 0, shift_acc = 0;
  const std::size_t chunk = 4096;
  Tensor x0({chunk, d}), xt({chunk, d});
  std::size_t left = n_pairs;
  while (left > 0) {
    std::size_t m = std::min(chunk, left);
    for (std::size_t r = 0; r < m; r++)
      for (std::size_t c = 0; c < d; c++) {
        double v = setup.m0.data[c] + setup.s0 * rng.normal();
        x0.at2(r, c) = v;
        xt.at2(r, c) = v + setup.sigma * rng.normal();
      }
    Tensor mu = posterior_mean(setup, xt);
    Tensor ystar = regularized_optimum(setup, xt);
    for (std::size_t r = 0; r < m; r++)
      for (std::size_t c = 0; c < d; c++) {
        double ey = ystar.at2(r, c) - x0.at2(r, c);
        double em = mu.at2(r, c) - x0.at2(r, c);
        double es = ystar.at2(r, c) - mu.at2(r, c);
        gap_acc += ey * ey - em * em;
        shift_acc += es * es;
      }
    left -= m;
  }
  Prop2Report rep;
  rep.lambda = setup.lambda;
  rep.sigma = setup.sigma;
  rep.n_pairs = n_pairs;
  rep.mse_gap = gap_acc / double(n_pairs);
  rep.shift_sq = shift_acc / double(n_pairs);
  rep.ratio = rep.shift_sq > 0 ? rep.mse_gap / rep.shift_sq : 1.0;
  return rep;
}

}  // namespace scdiff
