#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "scdiff/tensor.hpp"

namespace scdiff {

struct ConstraintField;

enum class Op : uint8_t {
  leaf,
  add,
  sub,
  mul,
  matmul,
  sum,
  sum_rows,
  mean,
  square,
  sqrt_op,
  abs_op,
  exp_op,
  neg,
  scale,
  concat_cols,
  slice_cols,
  elu,
  silu,
  softplus,
  constraint_grad,
  constraint_sq_norm,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::leaf;
  std::array<int, 2> in = {-1, -1};
  Tensor val;
  double alpha = 0;                          // scale factor
  std::size_t c0 = 0, c1 = 0;                // slice column range
  const ConstraintField* field = nullptr;    // constraint-backed ops
};

struct VarRef {
  uint64_t graph_id = 0;
  int node = -1;
  std::vector<std::size_t> shape;
};

class Graph;
class Gradients;
Gradients backward_from(const Graph& g, const VarRef& y, const Tensor& cot);

// Append-only eager tape. Values are computed when nodes are appended;
// backward replays the tape in reverse.
class Graph {
 public:
  Graph();

  uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  VarRef leaf(Tensor v);
  VarRef constant(Tensor v) { return leaf(std::move(v)); }

  const Tensor& val(const VarRef& r) const;
  const Node& node(int i) const { return nodes_[i]; }

  VarRef append(Node n);

 private:
  uint64_t id_;
  std::vector<Node> nodes_;

  friend class Gradients;
  friend Gradients backward_from(const Graph& g, const VarRef& y, const Tensor& cot);
};

// Elementwise binary ops accept equal shapes, (m,n) op (n) / (1,n) row
// broadcast, and (m,n) op (m,1) column broadcast.
VarRef add(Graph& g, const VarRef& a, const VarRef& b);
VarRef sub(Graph& g, const VarRef& a, const VarRef& b);
VarRef mul(Graph& g, const VarRef& a, const VarRef& b);
// (m,k) x (k,n) -> (m,n)
VarRef matmul(Graph& g, const VarRef& a, const VarRef& b);
VarRef sum(Graph& g, const VarRef& a);                       // -> scalar
VarRef sum_rows(Graph& g, const VarRef& a);                  // (m,n) -> (m,1)
VarRef mean(Graph& g, const VarRef& a);                      // -> scalar
VarRef square(Graph& g, const VarRef& a);
VarRef sqrt(Graph& g, const VarRef& a);                      // domain x >= 0
VarRef abs(Graph& g, const VarRef& a);                       // subgradient 0 at 0
VarRef exp(Graph& g, const VarRef& a);
VarRef neg(Graph& g, const VarRef& a);
VarRef scale(Graph& g, const VarRef& a, double alpha);
// (m,a) ++ (m,b) -> (m,a+b)
VarRef concat_cols(Graph& g, const VarRef& a, const VarRef& b);
// columns [c0,c1) of (m,n) -> (m,c1-c0)
VarRef slice_cols(Graph& g, const VarRef& a, std::size_t c0, std::size_t c1);
VarRef elu(Graph& g, const VarRef& a);
VarRef silu(Graph& g, const VarRef& a);
VarRef softplus(Graph& g, const VarRef& a);

// Rows of y (batch, d) are independent samples in the field's domain.
// Forward: per-row grad log l_c(y). Backward: per-row Hessian-vector product
// of log l_c, the one second-order path the tape supports.
VarRef constraint_grad(Graph& g, const VarRef& y, const ConstraintField& field);
// Forward: per-row mean squared residual entry, (batch, d) -> (batch, 1).
// Backward: field-supplied gradient of that scalar.
VarRef constraint_sq_norm(Graph& g, const VarRef& y, const ConstraintField& field);

class Gradients {
 public:
  // Cotangent of a node; zeros if the node was not reached.
  const Tensor& of(const VarRef& r) const;

 private:
  friend Gradients backward_from(const Graph& g, const VarRef& y, const Tensor& cot);
  uint64_t graph_id_ = 0;
  std::vector<Tensor> by_node_;
};

// Reverse pass seeded with d(loss)/d(loss) = 1. loss must be scalar.
Gradients backward(const Graph& g, const VarRef& loss);

// f returns (value, analytic gradient). Result is the max over coordinates of
// |analytic - central difference| / max(1, |analytic|).
using DifferentiableScalarFn =
    std::function<std::pair<double, Tensor>(const Tensor&)>;
double grad_check(const DifferentiableScalarFn& f, const Tensor& x, double eps);

}  // namespace scdiff
