#include "scdiff/graph.hpp"

#include <atomic>
#include <cblas.h>

#include "scdiff/constraints.hpp"

extern "C" void openblas_set_num_threads(int);

namespace scdiff {

namespace {

std::atomic<uint64_t> g_graph_ids{1};

struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
BlasInit g_blas_init;

[[noreturn]] void fail(Op op, const std::string& msg) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + msg);
}

// How one operand of a binary elementwise op maps onto the output grid.
enum class Bcast { same, row, col };

Bcast bcast_kind(Op op, const std::vector<std::size_t>& big,
                 const std::vector<std::size_t>& small) {
  if (big == small) return Bcast::same;
  if (big.size() == 2) {
    if ((small.size() == 1 && small[0] == big[1]) ||
        (small.size() == 2 && small[0] == 1 && small[1] == big[1]))
      return Bcast::row;
    if (small.size() == 2 && small[0] == big[0] && small[1] == 1)
      return Bcast::col;
  }
  fail(op, "shapes " + shape_str(big) + " and " + shape_str(small) +
               " do not conform");
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::sum: return "sum";
    case Op::sum_rows: return "sum_rows";
    case Op::mean: return "mean";
    case Op::square: return "square";
    case Op::sqrt_op: return "sqrt";
    case Op::abs_op: return "abs";
    case Op::exp_op: return "exp";
    case Op::neg: return "neg";
    case Op::scale: return "scale";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::elu: return "elu";
    case Op::silu: return "silu";
    case Op::softplus: return "softplus";
    case Op::constraint_grad: return "constraint_grad";
    case Op::constraint_sq_norm: return "constraint_sq_norm";
  }
  return "?";
}

Graph::Graph() : id_(g_graph_ids.fetch_add(1)) {}

VarRef Graph::leaf(Tensor v) {
  Node n;
  n.op = Op::leaf;
  n.val = std::move(v);
  return append(std::move(n));
}

const Tensor& Graph::val(const VarRef& r) const {
  if (r.graph_id != id_ || r.node < 0 || r.node >= int(nodes_.size()))
    throw std::invalid_argument("graph: ref does not belong to this graph");
  return nodes_[r.node].val;
}

VarRef Graph::append(Node n) {
  nodes_.push_back(std::move(n));
  VarRef r;
  r.graph_id = id_;
  r.node = int(nodes_.size()) - 1;
  r.shape = nodes_.back().val.shape;
  return r;
}

namespace {

const Tensor& input(Graph& g, Op op, const VarRef& r) {
  if (r.graph_id != g.id()) fail(op, "operand from a different graph");
  return g.val(r);
}

VarRef binary_elementwise(Graph& g, Op op, const VarRef& ra, const VarRef& rb) {
  const Tensor& a = input(g, op, ra);
  const Tensor& b = input(g, op, rb);
  // Exactly one operand may be the broadcast-reduced one.
  bool a_small = a.numel() < b.numel();
  const Tensor& big = a_small ? b : a;
  const Tensor& small = a_small ? a : b;
  Bcast k = bcast_kind(op, big.shape, small.shape);

  Tensor out(big.shape);
  std::size_t m = big.rank() == 2 ? big.shape[0] : 1;
  std::size_t n = big.rank() == 2 ? big.shape[1] : big.numel();
  auto idx = [&](std::size_t i, std::size_t j) {
    switch (k) {
      case Bcast::same: return i * n + j;
      case Bcast::row: return j;
      case Bcast::col: return i;
    }
    return std::size_t(0);
  };
  for (std::size_t i = 0; i < m; i++)
    for (std::size_t j = 0; j < n; j++) {
      std::size_t o = i * n + j;
      double av = a_small ? small.data[idx(i, j)] : big.data[o];
      double bv = a_small ? big.data[o] : small.data[idx(i, j)];
      double r = 0;
      switch (op) {
        case Op::add: r = av + bv; break;
        case Op::sub: r = av - bv; break;
        case Op::mul: r = av * bv; break;
        default: fail(op, "not elementwise");
      }
      out.data[o] = r;
    }
  Node node;
  node.op = op;
  node.in = {ra.node, rb.node};
  node.val = std::move(out);
  return g.append(std::move(node));
}

VarRef unary(Graph& g, Op op, const VarRef& ra,
             const std::function<double(double)>& f) {
  const Tensor& a = input(g, op, ra);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); i++) out.data[i] = f(a.data[i]);
  Node node;
  node.op = op;
  node.in = {ra.node, -1};
  node.val = std::move(out);
  return g.append(std::move(node));
}

}  // namespace

VarRef add(Graph& g, const VarRef& a, const VarRef& b) {
  return binary_elementwise(g, Op::add, a, b);
}
VarRef sub(Graph& g, const VarRef& a, const VarRef& b) {
  return binary_elementwise(g, Op::sub, a, b);
}
VarRef mul(Graph& g, const VarRef& a, const VarRef& b) {
  return binary_elementwise(g, Op::mul, a, b);
}

VarRef matmul(Graph& g, const VarRef& ra, const VarRef& rb) {
  const Tensor& a = input(g, Op::matmul, ra);
  const Tensor& b = input(g, Op::matmul, rb);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    fail(Op::matmul, "shapes " + shape_str(a.shape) + " x " + shape_str(b.shape));
  std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(m), int(n), int(k),
              1.0, a.data.data(), int(k), b.data.data(), int(n), 0.0,
              out.data.data(), int(n));
  Node node;
  node.op = Op::matmul;
  node.in = {ra.node, rb.node};
  node.val = std::move(out);
  return g.append(std::move(node));
}

VarRef sum(Graph& g, const VarRef& ra) {
  const Tensor& a = input(g, Op::sum, ra);
  double s = 0;
  for (double v : a.data) s += v;
  Node node;
  node.op = Op::sum;
  node.in = {ra.node, -1};
  node.val = Tensor::scalar(s);
  return g.append(std::move(node));
}

VarRef sum_rows(Graph& g, const VarRef& ra) {
  const Tensor& a = input(g, Op::sum_rows, ra);
  if (a.rank() != 2) fail(Op::sum_rows, "needs a rank-2 operand");
  Tensor out({a.shape[0], 1});
  for (std::size_t i = 0; i < a.shape[0]; i++) {
    double s = 0;
    for (std::size_t j = 0; j < a.shape[1]; j++) s += a.at2(i, j);
    out.data[i] = s;
  }
  Node node;
  node.op = Op::sum_rows;
  node.in = {ra.node, -1};
  node.val = std::move(out);
  return g.append(std::move(node));
}

VarRef mean(Graph& g, const VarRef& ra) {
  const Tensor& a = input(g, Op::mean, ra);
  double s = 0;
  for (double v : a.data) s += v;
  Node node;
  node.op = Op::mean;
  node.in = {ra.node, -1};
  node.val = Tensor::scalar(s / double(a.numel()));
  return g.append(std::move(node));
}

VarRef square(Graph& g, const VarRef& a) {
  return unary(g, Op::square, a, [](double x) { return x * x; });
}
VarRef sqrt(Graph& g, const VarRef& a) {
  const Tensor& t = input(g, Op::sqrt_op, a);
  for (double v : t.data)
    if (v < 0) fail(Op::sqrt_op, "negative operand");
  return unary(g, Op::sqrt_op, a, [](double x) { return std::sqrt(x); });
}
VarRef abs(Graph& g, const VarRef& a) {
  return unary(g, Op::abs_op, a, [](double x) { return std::abs(x); });
}
VarRef exp(Graph& g, const VarRef& a) {
  return unary(g, Op::exp_op, a, [](double x) { return std::exp(x); });
}
VarRef neg(Graph& g, const VarRef& a) {
  return unary(g, Op::neg, a, [](double x) { return -x; });
}

VarRef scale(Graph& g, const VarRef& ra, double alpha) {
  const Tensor& a = input(g, Op::scale, ra);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); i++) out.data[i] = alpha * a.data[i];
  Node node;
  node.op = Op::scale;
  node.in = {ra.node, -1};
  node.alpha = alpha;
  node.val = std::move(out);
  return g.append(std::move(node));
}

VarRef concat_cols(Graph& g, const VarRef& ra, const VarRef& rb) {
  const Tensor& a = input(g, Op::concat_cols, ra);
  const Tensor& b = input(g, Op::concat_cols, rb);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    fail(Op::concat_cols, "needs rank-2 operands with equal row counts");
  std::size_t m = a.shape[0], na = a.shape[1], nb = b.shape[1];
  Tensor out({m, na + nb});
  for (std::size_t i = 0; i < m; i++) {
    for (std::size_t j = 0; j < na; j++) out.at2(i, j) = a.at2(i, j);
    for (std::size_t j = 0; j < nb; j++) out.at2(i, na + j) = b.at2(i, j);
  }
  Node node;
  node.op = Op::concat_cols;
  node.in = {ra.node, rb.node};
  node.c0 = na;
  node.val = std::move(out);
  return g.append(std::move(node));
}

VarRef slice_cols(Graph& g, const VarRef& ra, std::size_t c0, std::size_t c1) {
  const Tensor& a = input(g, Op::slice_cols, ra);
  if (a.rank() != 2 || c0 >= c1 || c1 > a.shape[1])
    fail(Op::slice_cols, "bad column range");
  std::size_t m = a.shape[0];
  Tensor out({m, c1 - c0});
  for (std::size_t i = 0; i < m; i++)
    for (std::size_t j = c0; j < c1; j++) out.at2(i, j - c0) = a.at2(i, j);
  Node node;
  node.op = Op::slice_cols;
  node.in = {ra.node, -1};
  node.c0 = c0;
  node.c1 = c1;
  node.val = std::move(out);
  return g.append(std::move(node));
}

VarRef elu(Graph& g, const VarRef& a) {
  return unary(g, Op::elu, a,
               [](double x) { return x > 0 ? x : std::exp(x) - 1.0; });
}
VarRef silu(Graph& g, const VarRef& a) {
  return unary(g, Op::silu, a, [](double x) { return x * sigmoid(x); });
}
VarRef softplus(Graph& g, const VarRef& a) {
  return unary(g, Op::softplus, a, [](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
}

namespace {

VarRef constraint_op(Graph& g, Op op, const VarRef& ry,
                     const ConstraintField& field) {
  const Tensor& y = input(g, op, ry);
  if (y.rank() != 2) fail(op, "needs a rank-2 (batch, dim) operand");
  std::size_t d = field.domain_numel();
  if (y.shape[1] != d)
    fail(op, "row size " + std::to_string(y.shape[1]) +
                 " does not match constraint domain " + std::to_string(d));
  std::size_t bsz = y.shape[0];
  Tensor out(op == Op::constraint_grad ? std::vector<std::size_t>{bsz, d}
                                       : std::vector<std::size_t>{bsz, 1});
  for (std::size_t i = 0; i < bsz; i++) {
    Tensor row = y.row_as(i, {d});
    if (op == Op::constraint_grad) {
      out.set_row(i, field.grad_log_lc(row));
    } else {
      out.data[i] = field.sq_residual_norm(row);
    }
  }
  Node node;
  node.op = op;
  node.in = {ry.node, -1};
  node.field = &field;
  node.val = std::move(out);
  return g.append(std::move(node));
}

}  // namespace

VarRef constraint_grad(Graph& g, const VarRef& y, const ConstraintField& field) {
  return constraint_op(g, Op::constraint_grad, y, field);
}
VarRef constraint_sq_norm(Graph& g, const VarRef& y,
                          const ConstraintField& field) {
  return constraint_op(g, Op::constraint_sq_norm, y, field);
}

const Tensor& Gradients::of(const VarRef& r) const {
  if (r.graph_id != graph_id_ || r.node < 0 || r.node >= int(by_node_.size()))
    throw std::invalid_argument("gradients: ref does not match backward pass");
  return by_node_[r.node];
}

namespace {

// Accumulate cot (shaped like the op output) into the cotangent of an operand
// that was broadcast with kind k, multiplying elementwise by factor if given.
void accum_bcast(Tensor& dst, const Tensor& cot, Bcast k, std::size_t m,
                 std::size_t n, double sign, const Tensor* factor) {
  for (std::size_t i = 0; i < m; i++)
    for (std::size_t j = 0; j < n; j++) {
      std::size_t o = i * n + j;
      double v = sign * cot.data[o];
      if (factor) v *= factor->data[o];
      switch (k) {
        case Bcast::same: dst.data[o] += v; break;
        case Bcast::row: dst.data[j] += v; break;
        case Bcast::col: dst.data[i] += v; break;
      }
    }
}

// Expand a possibly-broadcast operand value at output position (i,j).
struct OperandView {
  const Tensor* t;
  Bcast k;
  std::size_t n;
  double at(std::size_t i, std::size_t j) const {
    switch (k) {
      case Bcast::same: return t->data[i * n + j];
      case Bcast::row: return t->data[j];
      case Bcast::col: return t->data[i];
    }
    return 0;
  }
};

}  // namespace

Gradients backward_from(const Graph& g, const VarRef& y, const Tensor& cot) {
  if (y.graph_id != g.id()) throw std::invalid_argument("backward: foreign ref");
  const Tensor& yv = g.val(y);
  if (!cot.same_shape(yv) && cot.numel() != yv.numel())
    throw std::invalid_argument("backward: cotangent shape mismatch");

  Gradients grads;
  grads.graph_id_ = g.id();
  grads.by_node_.resize(g.size());
  for (std::size_t i = 0; i < g.size(); i++)
    grads.by_node_[i] = Tensor::zeros(g.node(int(i)).val.shape);
  auto& acc = grads.by_node_;
  for (std::size_t i = 0; i < cot.numel(); i++)
    acc[y.node].data[i] = cot.data[i];

  for (int i = y.node; i >= 0; i--) {
    const Node& nd = g.node(i);
    const Tensor& c = acc[i];
    if (nd.op == Op::leaf) continue;
    bool all_zero = true;
    for (double v : c.data)
      if (v != 0) {
        all_zero = false;
        break;
      }
    if (all_zero) continue;

    const Tensor& out = nd.val;
    int ia = nd.in[0], ib = nd.in[1];
    const Tensor* a = ia >= 0 ? &g.node(ia).val : nullptr;
    const Tensor* b = ib >= 0 ? &g.node(ib).val : nullptr;

    switch (nd.op) {
      case Op::add:
      case Op::sub:
      case Op::mul: {
        bool a_small = a->numel() < b->numel();
        const Tensor& big = a_small ? *b : *a;
        std::size_t m = big.rank() == 2 ? big.shape[0] : 1;
        std::size_t n = big.rank() == 2 ? big.shape[1] : big.numel();
        Bcast ks = bcast_kind(nd.op, big.shape, (a_small ? *a : *b).shape);
        Bcast ka = a_small ? ks : Bcast::same;
        Bcast kb = a_small ? Bcast::same : ks;
        if (nd.op == Op::mul) {
          OperandView va{a, ka, n}, vb{b, kb, n};
          for (std::size_t r = 0; r < m; r++)
            for (std::size_t q = 0; q < n; q++) {
              std::size_t o = r * n + q;
              double cv = c.data[o];
              if (cv == 0) continue;
              switch (ka) {
                case Bcast::same: acc[ia].data[o] += cv * vb.at(r, q); break;
                case Bcast::row: acc[ia].data[q] += cv * vb.at(r, q); break;
                case Bcast::col: acc[ia].data[r] += cv * vb.at(r, q); break;
              }
              switch (kb) {
                case Bcast::same: acc[ib].data[o] += cv * va.at(r, q); break;
                case Bcast::row: acc[ib].data[q] += cv * va.at(r, q); break;
                case Bcast::col: acc[ib].data[r] += cv * va.at(r, q); break;
              }
            }
        } else {
          double sb = nd.op == Op::sub ? -1.0 : 1.0;
          accum_bcast(acc[ia], c, ka, m, n, 1.0, nullptr);
          accum_bcast(acc[ib], c, kb, m, n, sb, nullptr);
        }
        break;
      }
      case Op::matmul: {
        std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
        // dA += C B^T, dB += A^T C
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(m), int(k),
                    int(n), 1.0, c.data.data(), int(n), b->data.data(), int(n),
                    1.0, acc[ia].data.data(), int(k));
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(k), int(n),
                    int(m), 1.0, a->data.data(), int(k), c.data.data(), int(n),
                    1.0, acc[ib].data.data(), int(n));
        break;
      }
      case Op::sum: {
        double cv = c.value();
        for (double& v : acc[ia].data) v += cv;
        break;
      }
      case Op::sum_rows: {
        std::size_t m = a->shape[0], n = a->shape[1];
        for (std::size_t r = 0; r < m; r++) {
          double cv = c.data[r];
          for (std::size_t q = 0; q < n; q++) acc[ia].data[r * n + q] += cv;
        }
        break;
      }
      case Op::mean: {
        double cv = c.value() / double(a->numel());
        for (double& v : acc[ia].data) v += cv;
        break;
      }
      case Op::square:
        for (std::size_t e = 0; e < a->numel(); e++)
          acc[ia].data[e] += c.data[e] * 2.0 * a->data[e];
        break;
      case Op::sqrt_op:
        for (std::size_t e = 0; e < a->numel(); e++)
          acc[ia].data[e] += c.data[e] * 0.5 / out.data[e];
        break;
      case Op::abs_op:
        for (std::size_t e = 0; e < a->numel(); e++) {
          double x = a->data[e];
          double s = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
          acc[ia].data[e] += c.data[e] * s;
        }
        break;
      case Op::exp_op:
        for (std::size_t e = 0; e < a->numel(); e++)
          acc[ia].data[e] += c.data[e] * out.data[e];
        break;
      case Op::neg:
        for (std::size_t e = 0; e < a->numel(); e++)
          acc[ia].data[e] -= c.data[e];
        break;
      case Op::scale:
        for (std::size_t e = 0; e < a->numel(); e++)
          acc[ia].data[e] += c.data[e] * nd.alpha;
        break;
      case Op::concat_cols: {
        std::size_t m = out.shape[0], na = nd.c0, n = out.shape[1];
        for (std::size_t r = 0; r < m; r++) {
          for (std::size_t q = 0; q < na; q++)
            acc[ia].data[r * na + q] += c.data[r * n + q];
          for (std::size_t q = na; q < n; q++)
            acc[ib].data[r * (n - na) + (q - na)] += c.data[r * n + q];
        }
        break;
      }
      case Op::slice_cols: {
        std::size_t m = out.shape[0], w = out.shape[1], n = a->shape[1];
        for (std::size_t r = 0; r < m; r++)
          for (std::size_t q = 0; q < w; q++)
            acc[ia].data[r * n + nd.c0 + q] += c.data[r * w + q];
        break;
      }
      case Op::elu:
        for (std::size_t e = 0; e < a->numel(); e++) {
          double x = a->data[e];
          acc[ia].data[e] += c.data[e] * (x > 0 ? 1.0 : std::exp(x));
        }
        break;
      case Op::silu:
        for (std::size_t e = 0; e < a->numel(); e++) {
          double s = sigmoid(a->data[e]);
          acc[ia].data[e] += c.data[e] * s * (1.0 + a->data[e] * (1.0 - s));
        }
        break;
      case Op::softplus:
        for (std::size_t e = 0; e < a->numel(); e++)
          acc[ia].data[e] += c.data[e] * sigmoid(a->data[e]);
        break;
      case Op::constraint_grad: {
        std::size_t bsz = a->shape[0], d = a->shape[1];
        for (std::size_t r = 0; r < bsz; r++) {
          Tensor yrow = a->row_as(r, {d});
          Tensor crow = c.row_as(r, {d});
          Tensor h = nd.field->hvp_log_lc(yrow, crow);
          for (std::size_t q = 0; q < d; q++)
            acc[ia].data[r * d + q] += h.data[q];
        }
        break;
      }
      case Op::constraint_sq_norm: {
        std::size_t bsz = a->shape[0], d = a->shape[1];
        for (std::size_t r = 0; r < bsz; r++) {
          double cv = c.data[r];
          if (cv == 0) continue;
          Tensor grow = nd.field->grad_sq_residual_norm(a->row_as(r, {d}));
          for (std::size_t q = 0; q < d; q++)
            acc[ia].data[r * d + q] += cv * grow.data[q];
        }
        break;
      }
      case Op::leaf:
        break;
    }
  }
  return grads;
}

Gradients backward(const Graph& g, const VarRef& loss) {
  if (!g.val(loss).is_scalar())
    throw std::invalid_argument("backward: loss must be scalar");
  return backward_from(g, loss, Tensor::scalar(1.0));
}

double grad_check(const DifferentiableScalarFn& f, const Tensor& x, double eps) {
  auto [v0, grad] = f(x);
  (void)v0;
  if (grad.numel() != x.numel())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  Tensor xp = x;
  double worst = 0;
  for (std::size_t i = 0; i < x.numel(); i++) {
    double orig = xp.data[i];
    xp.data[i] = orig + eps;
    double fp = f(xp).first;
    xp.data[i] = orig - eps;
    double fm = f(xp).first;
    xp.data[i] = orig;
    double fd = (fp - fm) / (2 * eps);
    double err = std::abs(grad.data[i] - fd) / std::max(1.0, std::abs(grad.data[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace scdiff
