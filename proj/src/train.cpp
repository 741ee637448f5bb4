#include "scdiff/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scdiff {

AdamState AdamState::init(const ParamSet& ps, double lr, double beta1,
                          double beta2, double eps) {
  AdamState st;
  st.lr = lr;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.eps = eps;
  st.m.reserve(ps.size());
  st.v.reserve(ps.size());
  for (const Tensor& p : ps.values) {
    st.m.push_back(Tensor::zeros(p.shape));
    st.v.push_back(st.m.back());
  }
  return st;
}

void adam_step(ParamSet& ps, AdamState& st, const std::vector<Tensor>& grads) {
  if (grads.size() != ps.size() || st.m.size() != ps.size())
    throw std::invalid_argument("adam: gradient list does not match parameters");
  for (std::size_t k = 0; k < grads.size(); k++)
    if (!grads[k].all_finite())
      throw std::runtime_error("adam: non-finite gradient for " + ps.names[k]);
  st.t++;
  double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
  double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
  for (std::size_t k = 0; k < ps.size(); k++) {
    Tensor& p = ps.values[k];
    Tensor& m = st.m[k];
    Tensor& v = st.v[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.numel(); i++) {
      m.data[i] = st.beta1 * m.data[i] + (1.0 - st.beta1) * g.data[i];
      v.data[i] = st.beta2 * v.data[i] + (1.0 - st.beta2) * g.data[i] * g.data[i];
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      p.data[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0;
  for (const Tensor& g : grads)
    for (double v : g.data) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.data) v *= s;
  }
  return norm;
}

void ema_update(ParamSet& ema, const ParamSet& current, double decay) {
  if (ema.size() != current.size())
    throw std::invalid_argument("ema: parameter sets differ in size");
  for (std::size_t k = 0; k < ema.size(); k++)
    for (std::size_t i = 0; i < ema.values[k].numel(); i++)
      ema.values[k].data[i] = decay * ema.values[k].data[i] +
                              (1.0 - decay) * current.values[k].data[i];
}

LossNodes dsm_loss_nodes(Graph& g, const DenoiserModel& model,
                         const std::vector<VarRef>& refs, const VarRef& x0,
                         const VarRef& x_t, const std::vector<double>& sigmas,
                         const NoiseSchedule& sched) {
  VarRef d = model.forward(g, refs, x_t, sigmas);
  std::vector<double> w(sigmas.size());
  for (std::size_t i = 0; i < sigmas.size(); i++)
    w[i] = loss_weight(sigmas[i], sched.sigma_data);
  VarRef per_row = sum_rows(g, square(g, sub(g, d, x0)));
  VarRef weighted = mul(g, per_row, g.constant(Tensor({sigmas.size(), 1}, w)));
  return {d, mean(g, weighted)};
}

VarRef dsm_loss(Graph& g, const DenoiserModel& model,
                const std::vector<VarRef>& refs, const VarRef& x0,
                const VarRef& x_t, const std::vector<double>& sigmas,
                const NoiseSchedule& sched) {
  return dsm_loss_nodes(g, model, refs, x0, x_t, sigmas, sched).loss;
}

VarRef pidm_loss(Graph& g, const DenoiserModel& model,
                 const std::vector<VarRef>& refs, const VarRef& x0,
                 const VarRef& x_t, const std::vector<double>& sigmas,
                 const NoiseSchedule& sched, const ConstraintField& field,
                 double lambda) {
  LossNodes n = dsm_loss_nodes(g, model, refs, x0, x_t, sigmas, sched);
  if (lambda == 0.0) return n.loss;
  VarRef penalty = mean(g, constraint_sq_norm(g, n.d, field));
  return add(g, n.loss, scale(g, penalty, lambda));
}

TrainStats train(DenoiserModel& model, const Tensor& data, const TrainConfig& cfg,
                 const NoiseSchedule& sched, const ConstraintField* penalty_field) {
  if (data.rank() != 2 || data.cols() != model.dim())
    throw std::invalid_argument("train: data must be (N, " +
                                std::to_string(model.dim()) + ")");
  if (cfg.batch == 0 || data.rows() < cfg.batch)
    throw std::invalid_argument("train: batch larger than the dataset");
  bool use_penalty = model.variant == Variant::pidm && cfg.pidm_lambda != 0.0;
  if (use_penalty && penalty_field == nullptr)
    throw std::invalid_argument("train: pidm training requires a penalty field");

  Rng rng(cfg.seed);
  ParamSet ema = model.params;
  AdamState adam =
      AdamState::init(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  std::vector<std::size_t> perm(data.rows());
  std::iota(perm.begin(), perm.end(), 0);

  TrainStats stats;
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  std::size_t iter = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; epoch++) {
    for (std::size_t i = data.rows(); i > 1; i--) {
      std::size_t j = rng.index(i);
      std::swap(perm[i - 1], perm[j]);
    }
    for (std::size_t start = 0; start + cfg.batch <= data.rows() && !done;
         start += cfg.batch) {
      Tensor x0({cfg.batch, model.dim()});
      Tensor xt({cfg.batch, model.dim()});
      std::vector<double> sigmas(cfg.batch);
      for (std::size_t b = 0; b < cfg.batch; b++) {
        std::size_t row = perm[start + b];
        sigmas[b] = sample_noise_level(cfg.noise, rng);
        for (std::size_t c = 0; c < model.dim(); c++) {
          double v = data.at2(row, c);
          x0.at2(b, c) = v;
          xt.at2(b, c) = v + sigmas[b] * rng.normal();
        }
      }

      Graph g;
      auto refs = leaf_all(g, model.params);
      VarRef x0r = g.constant(std::move(x0));
      VarRef xtr = g.constant(std::move(xt));
      VarRef loss =
          use_penalty
              ? pidm_loss(g, model, refs, x0r, xtr, sigmas, sched,
                          *penalty_field, cfg.pidm_lambda)
              : dsm_loss(g, model, refs, x0r, xtr, sigmas, sched);
      double loss_val = g.val(loss).value();
      if (!std::isfinite(loss_val))
        throw std::runtime_error("train: non-finite loss at iteration " +
                                 std::to_string(iter));

      Gradients grads = backward(g, loss);
      std::vector<Tensor> gs;
      gs.reserve(refs.size());
      for (const VarRef& r : refs) gs.push_back(grads.of(r));
      for (std::size_t k = 0; k < gs.size(); k++)
        if (!gs[k].all_finite())
          throw std::runtime_error("train: non-finite gradient for " +
                                   model.params.names[k] + " at iteration " +
                                   std::to_string(iter));
      clip_global_norm(gs, cfg.clip_norm);
      adam_step(model.params, adam, gs);
      ema_update(ema, model.params, cfg.ema_decay);

      if (iter % cfg.log_every == 0)
        stats.trace.push_back({iter, loss_val, elapsed_ms()});
      stats.final_loss = loss_val;
      iter++;
      if (cfg.max_iters != 0 && iter >= cfg.max_iters) done = true;
    }
  }
  stats.iters = iter;
  model.params = std::move(ema);
  return stats;
}

}  // namespace scdiff
