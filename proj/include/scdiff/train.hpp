#pragma once

#include <cstdint>

#include "scdiff/denoiser.hpp"
#include "scdiff/schedule.hpp"

namespace scdiff {

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t max_iters = 0;  // 0 means no cap
  std::size_t batch = 128;
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double ema_decay = 0.99;
  double clip_norm = 10.0;
  double pidm_lambda = 1.0;  // squared-residual penalty weight, pidm only
  NoiseLevelDist noise;
  uint64_t seed = 0;
  std::size_t log_every = 100;
};

struct AdamState {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor> m, v;

  static AdamState init(const ParamSet& ps, double lr, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8);
};

// Bias-corrected update. Throws naming the parameter on a non-finite gradient.
void adam_step(ParamSet& ps, AdamState& st, const std::vector<Tensor>& grads);

// Scales grads in place so their joint norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// ema <- decay * ema + (1 - decay) * current
void ema_update(ParamSet& ema, const ParamSet& current, double decay);

struct LossNodes {
  VarRef d;
  VarRef loss;
};

// Denoising score-matching loss: mean over the batch of
// w(sigma_i) ||D(x_t, sigma_i) - x0||^2 with the norm summed over dimensions.
LossNodes dsm_loss_nodes(Graph& g, const DenoiserModel& model,
                         const std::vector<VarRef>& refs, const VarRef& x0,
                         const VarRef& x_t, const std::vector<double>& sigmas,
                         const NoiseSchedule& sched);
VarRef dsm_loss(Graph& g, const DenoiserModel& model,
                const std::vector<VarRef>& refs, const VarRef& x0,
                const VarRef& x_t, const std::vector<double>& sigmas,
                const NoiseSchedule& sched);

// DSM plus lambda times the mean squared constraint residual of the denoised
// batch. lambda = 0 builds exactly the DSM graph.
VarRef pidm_loss(Graph& g, const DenoiserModel& model,
                 const std::vector<VarRef>& refs, const VarRef& x0,
                 const VarRef& x_t, const std::vector<double>& sigmas,
                 const NoiseSchedule& sched, const ConstraintField& field,
                 double lambda);

struct TracePoint {
  std::size_t iter = 0;
  double loss = 0;
  double wall_ms = 0;
};

struct TrainStats {
  std::vector<TracePoint> trace;
  std::size_t iters = 0;
  double final_loss = 0;
};

// Epoch-shuffled minibatch training; partial trailing batches are skipped so
// every step sees a full batch. The model is left holding the EMA weights.
// pidm models require penalty_field when cfg.pidm_lambda > 0.
TrainStats train(DenoiserModel& model, const Tensor& data, const TrainConfig& cfg,
                 const NoiseSchedule& sched,
                 const ConstraintField* penalty_field = nullptr);

}  // namespace scdiff
