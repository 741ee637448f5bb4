#pragma once

#include <memory>
#include <string>

#include "scdiff/constraints.hpp"
#include "scdiff/graph.hpp"
#include "scdiff/rng.hpp"

namespace scdiff {

struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  std::size_t add(std::string name, Tensor v) {
    names.push_back(std::move(name));
    values.push_back(std::move(v));
    return values.size() - 1;
  }
  std::size_t size() const { return values.size(); }
};

// All parameters as graph leaves, aligned with ParamSet order.
std::vector<VarRef> leaf_all(Graph& g, const ParamSet& ps);

// EDM preconditioning coefficients.
struct Precond {
  double c_skip, c_out, c_in, c_noise;
};
Precond precond(double sigma, double sigma_data);

enum class Variant { vanilla, pidm, scd };
const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// sigma-conditioned MLP denoiser with EDM preconditioning, optionally wrapped
// by the softly constrained correction
//   D(x, sigma) = D_base(x, sigma) + gamma(D_base, ln sigma) sigma^2 grad log l_c(D_base).
// The pidm variant shares the vanilla architecture; only its loss differs.
struct DenoiserModel {
  Variant variant = Variant::vanilla;
  std::vector<std::size_t> sample_shape;  // per-sample, e.g. {2} or {2,32,32}
  std::size_t hidden = 128;
  std::size_t depth = 3;  // hidden layers
  double sigma_data = 1.0;
  // gamma net (scd only)
  std::size_t gamma_hidden = 100;
  std::size_t gamma_depth = 2;
  bool gamma_pooled = false;   // pool d_orig to per-channel mean/std
  double gamma_multiplier = 1.0;  // 0 recovers the base denoiser exactly
  // constraint in model (normalized) space, scd only
  std::shared_ptr<const ConstraintField> field;
  std::string constraint_descriptor;
  // per-channel statistics of the raw training data
  std::vector<double> channel_mean, channel_std;

  ParamSet params;
  std::size_t gamma_first = 0;  // params[gamma_first..) belong to the gamma net

  std::size_t dim() const { return Tensor::numel_of(sample_shape); }
  std::size_t channels() const {
    return sample_shape.empty() ? 1 : sample_shape[0];
  }

  static DenoiserModel init(Variant variant, std::vector<std::size_t> sample_shape,
                            double sigma_data,
                            std::shared_ptr<const ConstraintField> field, Rng& rng,
                            std::size_t hidden = 128, std::size_t depth = 3);

  // Graph-building forward. x_t is a (batch, dim) node; sigmas has one entry
  // per row. refs must come from leaf_all(g, params).
  VarRef forward(Graph& g, const std::vector<VarRef>& refs, const VarRef& x_t,
                 const std::vector<double>& sigmas) const;

  struct ForwardNodes {
    VarRef d_base;
    VarRef d;
    VarRef gamma;  // (batch, 1), valid when has_gamma
    bool has_gamma = false;
  };
  ForwardNodes forward_nodes(Graph& g, const std::vector<VarRef>& refs,
                             const VarRef& x_t,
                             const std::vector<double>& sigmas) const;

  // Convenience single-sigma evaluation paths used by sampling and NLL.
  Tensor denoise(const Tensor& x, double sigma) const;
  // d(denoise)/dx contracted with cot (both (batch, dim)).
  Tensor denoise_vjp(const Tensor& x, double sigma, const Tensor& cot) const;
  // gamma(x, sigma) for scd models, shape (batch, 1).
  Tensor gamma(const Tensor& x, double sigma) const;
};

// Checkpoint I/O. Field objects are not serialized; the descriptor string is
// recorded and the caller re-supplies the field when loading an scd model.
void save_checkpoint(const std::string& path, const DenoiserModel& model);
DenoiserModel load_checkpoint(const std::string& path,
                              std::shared_ptr<const ConstraintField> field = nullptr);

}  // namespace scdiff
