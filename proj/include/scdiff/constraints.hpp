#pragma once

#include <memory>
#include <string>

#include "scdiff/rng.hpp"
#include "scdiff/tensor.hpp"

namespace scdiff {

// A differentiable soft constraint on single samples. x may arrive flat or
// domain-shaped; only numel is checked. Fields are immutable and shareable.
struct ConstraintField {
  virtual ~ConstraintField() = default;

  virtual std::vector<std::size_t> domain_shape() const = 0;
  virtual std::string descriptor() const = 0;

  virtual Tensor residual(const Tensor& x) const = 0;
  virtual double log_lc(const Tensor& x) const = 0;
  virtual Tensor grad_log_lc(const Tensor& x) const = 0;
  // Action of the Hessian of log l_c at x on v (sign pattern of |R| frozen).
  virtual Tensor hvp_log_lc(const Tensor& x, const Tensor& v) const = 0;

  // Mean squared residual entry and its gradient (the PIDM penalty).
  virtual double sq_residual_norm(const Tensor& x) const;
  virtual Tensor grad_sq_residual_norm(const Tensor& x) const = 0;

  std::size_t domain_numel() const { return Tensor::numel_of(domain_shape()); }

 protected:
  void check_domain(const Tensor& x) const;
};

// R(x,y) = c (sqrt(x^2+y^2) - 1)^2, log l_c = -R. Gradient defined as 0 at
// the origin.
class CircleField : public ConstraintField {
 public:
  explicit CircleField(double c = 1.0) : c_(c) {}
  std::vector<std::size_t> domain_shape() const override { return {2}; }
  std::string descriptor() const override;
  Tensor residual(const Tensor& x) const override;
  double log_lc(const Tensor& x) const override;
  Tensor grad_log_lc(const Tensor& x) const override;
  Tensor hvp_log_lc(const Tensor& x, const Tensor& v) const override;
  Tensor grad_sq_residual_norm(const Tensor& x) const override;
  double strength() const { return c_; }

 private:
  double c_;
};

struct GridSpec {
  std::size_t n = 32;           // points per side on the unit square
  double h() const { return 1.0 / double(n - 1); }
};

// Source/sink block layout: square blocks of side ceil(n/8), +f_max in the
// top-left corner block, -f_max in the bottom-right one.
struct DarcySource {
  double f_max = 10.0;
  std::size_t block = 0;

  static DarcySource make(const GridSpec& grid, double f_max);
  Tensor field(const GridSpec& grid) const;  // (n,n), sums to zero
};

// Channels (K, p) on an n x n grid; interior residual of the flux-form
// divergence with arithmetic-mean face permeability plus the source field.
// log l_c = -mean |R| over interior cells.
class DarcyField : public ConstraintField {
 public:
  DarcyField(GridSpec grid, DarcySource source)
      : grid_(grid), source_(source), f_(source.field(grid)) {}
  std::vector<std::size_t> domain_shape() const override {
    return {2, grid_.n, grid_.n};
  }
  std::string descriptor() const override;
  Tensor residual(const Tensor& x) const override;
  double log_lc(const Tensor& x) const override;
  Tensor grad_log_lc(const Tensor& x) const override;
  Tensor hvp_log_lc(const Tensor& x, const Tensor& v) const override;
  Tensor grad_sq_residual_norm(const Tensor& x) const override;
  const GridSpec& grid() const { return grid_; }
  const DarcySource& source() const { return source_; }

 private:
  // Sum over interior of w_ij * grad R_ij, exploiting that grad_K R is linear
  // in p and grad_p R is linear in K (f drops out of both).
  Tensor weighted_grad(const Tensor& w, const Tensor& K, const Tensor& p) const;
  GridSpec grid_;
  DarcySource source_;
  Tensor f_;
};

// Channels (u, a); interior residual of the 5-point Laplacian plus k^2 u - a.
// log l_c = -mean |R| over interior cells. Linear residual, so the HVP of
// log l_c vanishes.
class HelmholtzField : public ConstraintField {
 public:
  HelmholtzField(GridSpec grid, double k);
  std::vector<std::size_t> domain_shape() const override {
    return {2, grid_.n, grid_.n};
  }
  std::string descriptor() const override;
  Tensor residual(const Tensor& x) const override;
  double log_lc(const Tensor& x) const override;
  Tensor grad_log_lc(const Tensor& x) const override;
  Tensor hvp_log_lc(const Tensor& x, const Tensor& v) const override;
  Tensor grad_sq_residual_norm(const Tensor& x) const override;
  const GridSpec& grid() const { return grid_; }
  double wavenumber() const { return k_; }

 private:
  Tensor weighted_grad(const Tensor& w) const;
  GridSpec grid_;
  double k_;
};

// R(y) = a'y - b with unit a; log l_c = -|R|. Used by the closed-form
// Gaussian oracles and small tests.
class LinearField : public ConstraintField {
 public:
  LinearField(Tensor a, double b);
  std::vector<std::size_t> domain_shape() const override { return a_.shape; }
  std::string descriptor() const override;
  Tensor residual(const Tensor& x) const override;
  double log_lc(const Tensor& x) const override;
  Tensor grad_log_lc(const Tensor& x) const override;
  Tensor hvp_log_lc(const Tensor& x, const Tensor& v) const override;
  Tensor grad_sq_residual_norm(const Tensor& x) const override;
  const Tensor& direction() const { return a_; }
  double offset() const { return b_; }

 private:
  Tensor a_;
  double b_;
};

// Adapter evaluating a base field on denormalized values: x_raw = mu + s * x.
// mu and s are per-element expansions of per-channel statistics.
class NormalizedField : public ConstraintField {
 public:
  NormalizedField(std::shared_ptr<const ConstraintField> base,
                  std::vector<double> channel_mean,
                  std::vector<double> channel_std);
  std::vector<std::size_t> domain_shape() const override {
    return base_->domain_shape();
  }
  std::string descriptor() const override;
  Tensor residual(const Tensor& x) const override;
  double log_lc(const Tensor& x) const override;
  Tensor grad_log_lc(const Tensor& x) const override;
  Tensor hvp_log_lc(const Tensor& x, const Tensor& v) const override;
  double sq_residual_norm(const Tensor& x) const override;
  Tensor grad_sq_residual_norm(const Tensor& x) const override;

 private:
  Tensor denorm(const Tensor& x) const;
  Tensor chain(Tensor g) const;  // multiply by per-element std
  std::shared_ptr<const ConstraintField> base_;
  std::vector<double> mean_, std_;
  std::vector<double> elem_mean_, elem_std_;
};

// Constraint-side misspecification: rescale the source amplitude used by the
// constraint (data generation keeps the true one).
DarcyField misspecify_darcy(const DarcyField& field, double f_max_constraint);
// Perturb the wavenumber once: k + N(0, sigma_obs^2). The draw is consumed
// from rng so the perturbed k is reproducible and can be recorded.
HelmholtzField misspecify_helmholtz(const HelmholtzField& field, double sigma_obs,
                                    Rng& rng);

}  // namespace scdiff
