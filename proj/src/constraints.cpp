#include "scdiff/constraints.hpp"

#include <cstdio>

namespace scdiff {

namespace {

double sign0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void ConstraintField::check_domain(const Tensor& x) const {
  if (x.numel() != domain_numel())
    throw std::invalid_argument("constraint " + descriptor() + ": value has " +
                                std::to_string(x.numel()) +
                                " elements, domain has " +
                                std::to_string(domain_numel()));
}

double ConstraintField::sq_residual_norm(const Tensor& x) const {
  Tensor r = residual(x);
  double s = 0;
  for (double v : r.data) s += v * v;
  return s / double(r.numel());
}

// ---------------------------------------------------------------- circle

std::string CircleField::descriptor() const {
  return "circle(c=" + fmt("%g", c_) + ")";
}

Tensor CircleField::residual(const Tensor& x) const {
  check_domain(x);
  double r = std::hypot(x.data[0], x.data[1]);
  double d = r - 1.0;
  return Tensor::scalar(c_ * d * d);
}

double CircleField::log_lc(const Tensor& x) const { return -residual(x).value(); }

Tensor CircleField::grad_log_lc(const Tensor& x) const {
  check_domain(x);
  Tensor g({2});
  double r = std::hypot(x.data[0], x.data[1]);
  if (r < 1e-12) return g;  // gradient defined as 0 at the origin
  double f = -2.0 * c_ * (r - 1.0) / r;
  g.data[0] = f * x.data[0];
  g.data[1] = f * x.data[1];
  return g;
}

Tensor CircleField::hvp_log_lc(const Tensor& x, const Tensor& v) const {
  check_domain(x);
  if (v.numel() != 2) throw std::invalid_argument("circle hvp: bad vector");
  double r = std::hypot(x.data[0], x.data[1]);
  Tensor h({2});
  if (r < 1e-12) {
    // Radial limit of the Hessian; the tangential part has no continuous
    // extension at the origin, so the isotropic quadratic term is used.
    h.data[0] = -2.0 * c_ * v.data[0];
    h.data[1] = -2.0 * c_ * v.data[1];
    return h;
  }
  double ux = x.data[0] / r, uy = x.data[1] / r;
  double uv = ux * v.data[0] + uy * v.data[1];
  double t = 1.0 - 1.0 / r;
  // H of the residual = 2c [ uu' + (1 - 1/r)(I - uu') ]; log l_c = -R.
  h.data[0] = -2.0 * c_ * (uv * ux + t * (v.data[0] - uv * ux));
  h.data[1] = -2.0 * c_ * (uv * uy + t * (v.data[1] - uv * uy));
  return h;
}

Tensor CircleField::grad_sq_residual_norm(const Tensor& x) const {
  check_domain(x);
  Tensor g({2});
  double r = std::hypot(x.data[0], x.data[1]);
  if (r < 1e-12) return g;
  double d = r - 1.0;
  // d/dx (c^2 d^4) = 4 c^2 d^3 x / r
  double f = 4.0 * c_ * c_ * d * d * d / r;
  g.data[0] = f * x.data[0];
  g.data[1] = f * x.data[1];
  return g;
}

// ---------------------------------------------------------------- darcy

DarcySource DarcySource::make(const GridSpec& grid, double f_max) {
  DarcySource s;
  s.f_max = f_max;
  s.block = (grid.n + 7) / 8;
  return s;
}

Tensor DarcySource::field(const GridSpec& grid) const {
  std::size_t n = grid.n, b = block;
  Tensor f({n, n});
  for (std::size_t i = 0; i < b; i++)
    for (std::size_t j = 0; j < b; j++) {
      f.at2(i, j) = f_max;
      f.at2(n - 1 - i, n - 1 - j) = -f_max;
    }
  return f;
}

std::string DarcyField::descriptor() const {
  return "darcy(n=" + std::to_string(grid_.n) + ",f_max=" +
         fmt("%.12g", source_.f_max) + ")";
}

Tensor DarcyField::residual(const Tensor& x) const {
  check_domain(x);
  std::size_t n = grid_.n, nn = n * n;
  double ih2 = 1.0 / (grid_.h() * grid_.h());
  const double* K = x.data.data();
  const double* p = x.data.data() + nn;
  Tensor R({n - 2, n - 2});
  for (std::size_t i = 1; i + 1 < n; i++)
    for (std::size_t j = 1; j + 1 < n; j++) {
      std::size_t c = i * n + j;
      double Ke = 0.5 * (K[c + n] + K[c]);
      double Kw = 0.5 * (K[c - n] + K[c]);
      double Kn = 0.5 * (K[c + 1] + K[c]);
      double Ks = 0.5 * (K[c - 1] + K[c]);
      double flux = Ke * (p[c + n] - p[c]) - Kw * (p[c] - p[c - n]) +
                    Kn * (p[c + 1] - p[c]) - Ks * (p[c] - p[c - 1]);
      R.at2(i - 1, j - 1) = flux * ih2 + f_.data[c];
    }
  return R;
}

double DarcyField::log_lc(const Tensor& x) const {
  Tensor R = residual(x);
  double s = 0;
  for (double v : R.data) s += std::abs(v);
  return -s / double(R.numel());
}

Tensor DarcyField::weighted_grad(const Tensor& w, const Tensor& K,
                                 const Tensor& p) const {
  std::size_t n = grid_.n, nn = n * n;
  double ih2 = 1.0 / (grid_.h() * grid_.h());
  Tensor out({2, n, n});
  double* gK = out.data.data();
  double* gp = out.data.data() + nn;
  for (std::size_t i = 1; i + 1 < n; i++)
    for (std::size_t j = 1; j + 1 < n; j++) {
      double wv = w.at2(i - 1, j - 1);
      if (wv == 0) continue;
      std::size_t c = i * n + j;
      double Ke = 0.5 * (K.data[c + n] + K.data[c]);
      double Kw = 0.5 * (K.data[c - n] + K.data[c]);
      double Kn = 0.5 * (K.data[c + 1] + K.data[c]);
      double Ks = 0.5 * (K.data[c - 1] + K.data[c]);
      double s = wv * ih2;
      gp[c + n] += s * Ke;
      gp[c - n] += s * Kw;
      gp[c + 1] += s * Kn;
      gp[c - 1] += s * Ks;
      gp[c] -= s * (Ke + Kw + Kn + Ks);
      double de = p.data[c + n] - p.data[c];
      double dw = p.data[c - n] - p.data[c];
      double dn = p.data[c + 1] - p.data[c];
      double ds = p.data[c - 1] - p.data[c];
      double t = 0.5 * s;
      gK[c + n] += t * de;
      gK[c - n] += t * dw;
      gK[c + 1] += t * dn;
      gK[c - 1] += t * ds;
      gK[c] += t * (de + dw + dn + ds);
    }
  return out;
}

namespace {

// Split a (2,n,n) value into channel views and build the weight field
// lambda(R) for the weighted adjoint.
struct GridParts {
  Tensor a, b;
};
GridParts split_channels(const Tensor& x, std::size_t n) {
  GridParts parts{Tensor({n, n}), Tensor({n, n})};
  std::copy(x.data.begin(), x.data.begin() + n * n, parts.a.data.begin());
  std::copy(x.data.begin() + n * n, x.data.end(), parts.b.data.begin());
  return parts;
}

}  // namespace

Tensor DarcyField::grad_log_lc(const Tensor& x) const {
  Tensor R = residual(x);
  double im = -1.0 / double(R.numel());
  Tensor w(R.shape);
  for (std::size_t i = 0; i < R.numel(); i++) w.data[i] = im * sign0(R.data[i]);
  auto parts = split_channels(x, grid_.n);
  return weighted_grad(w, parts.a, parts.b);
}

Tensor DarcyField::hvp_log_lc(const Tensor& x, const Tensor& v) const {
  check_domain(x);
  if (v.numel() != x.numel()) throw std::invalid_argument("darcy hvp: bad vector");
  Tensor R = residual(x);
  double im = -1.0 / double(R.numel());
  Tensor w(R.shape);
  for (std::size_t i = 0; i < R.numel(); i++) w.data[i] = im * sign0(R.data[i]);
  // R is bilinear in (K, p), so with the sign pattern frozen the Hessian
  // action is the same weighted adjoint evaluated on the direction.
  auto dir = split_channels(v, grid_.n);
  return weighted_grad(w, dir.a, dir.b);
}

Tensor DarcyField::grad_sq_residual_norm(const Tensor& x) const {
  Tensor R = residual(x);
  double m2 = 2.0 / double(R.numel());
  Tensor w(R.shape);
  for (std::size_t i = 0; i < R.numel(); i++) w.data[i] = m2 * R.data[i];
  auto parts = split_channels(x, grid_.n);
  return weighted_grad(w, parts.a, parts.b);
}

// ------------------------------------------------------------- helmholtz

HelmholtzField::HelmholtzField(GridSpec grid, double k) : grid_(grid), k_(k) {}

std::string HelmholtzField::descriptor() const {
  return "helmholtz(n=" + std::to_string(grid_.n) + ",k=" + fmt("%.12g", k_) + ")";
}

Tensor HelmholtzField::residual(const Tensor& x) const {
  check_domain(x);
  std::size_t n = grid_.n, nn = n * n;
  double ih2 = 1.0 / (grid_.h() * grid_.h());
  const double* u = x.data.data();
  const double* a = x.data.data() + nn;
  Tensor R({n - 2, n - 2});
  for (std::size_t i = 1; i + 1 < n; i++)
    for (std::size_t j = 1; j + 1 < n; j++) {
      std::size_t c = i * n + j;
      double lap = (u[c + n] + u[c - n] + u[c + 1] + u[c - 1] - 4.0 * u[c]) * ih2;
      R.at2(i - 1, j - 1) = lap + k_ * k_ * u[c] - a[c];
    }
  return R;
}

double HelmholtzField::log_lc(const Tensor& x) const {
  Tensor R = residual(x);
  double s = 0;
  for (double v : R.data) s += std::abs(v);
  return -s / double(R.numel());
}

Tensor HelmholtzField::weighted_grad(const Tensor& w) const {
  std::size_t n = grid_.n, nn = n * n;
  double ih2 = 1.0 / (grid_.h() * grid_.h());
  Tensor out({2, n, n});
  double* gu = out.data.data();
  double* ga = out.data.data() + nn;
  for (std::size_t i = 1; i + 1 < n; i++)
    for (std::size_t j = 1; j + 1 < n; j++) {
      double wv = w.at2(i - 1, j - 1);
      if (wv == 0) continue;
      std::size_t c = i * n + j;
      gu[c + n] += wv * ih2;
      gu[c - n] += wv * ih2;
      gu[c + 1] += wv * ih2;
      gu[c - 1] += wv * ih2;
      gu[c] += wv * (k_ * k_ - 4.0 * ih2);
      ga[c] -= wv;
    }
  return out;
}

Tensor HelmholtzField::grad_log_lc(const Tensor& x) const {
  Tensor R = residual(x);
  double im = -1.0 / double(R.numel());
  Tensor w(R.shape);
  for (std::size_t i = 0; i < R.numel(); i++) w.data[i] = im * sign0(R.data[i]);
  return weighted_grad(w);
}

Tensor HelmholtzField::hvp_log_lc(const Tensor& x, const Tensor& v) const {
  check_domain(x);
  if (v.numel() != x.numel())
    throw std::invalid_argument("helmholtz hvp: bad vector");
  return Tensor({2, grid_.n, grid_.n});  // residual is linear
}

Tensor HelmholtzField::grad_sq_residual_norm(const Tensor& x) const {
  Tensor R = residual(x);
  double m2 = 2.0 / double(R.numel());
  Tensor w(R.shape);
  for (std::size_t i = 0; i < R.numel(); i++) w.data[i] = m2 * R.data[i];
  return weighted_grad(w);
}

// ---------------------------------------------------------------- linear

LinearField::LinearField(Tensor a, double b) : a_(std::move(a)), b_(b) {
  if (a_.numel() == 0) throw std::invalid_argument("linear field: empty direction");
}

std::string LinearField::descriptor() const {
  return "linear(d=" + std::to_string(a_.numel()) + ",b=" + fmt("%g", b_) + ")";
}

Tensor LinearField::residual(const Tensor& x) const {
  check_domain(x);
  return Tensor::scalar(dot(a_, x) - b_);
}

double LinearField::log_lc(const Tensor& x) const {
  return -std::abs(residual(x).value());
}

Tensor LinearField::grad_log_lc(const Tensor& x) const {
  double r = residual(x).value();
  Tensor g = a_;
  double s = -sign0(r);
  for (double& v : g.data) v *= s;
  return g;
}

Tensor LinearField::hvp_log_lc(const Tensor& x, const Tensor& v) const {
  check_domain(x);
  (void)v;
  return Tensor::zeros(a_.shape);
}

Tensor LinearField::grad_sq_residual_norm(const Tensor& x) const {
  double r = residual(x).value();
  Tensor g = a_;
  for (double& v : g.data) v *= 2.0 * r;
  return g;
}

// ------------------------------------------------------------ normalized

NormalizedField::NormalizedField(std::shared_ptr<const ConstraintField> base,
                                 std::vector<double> channel_mean,
                                 std::vector<double> channel_std)
    : base_(std::move(base)),
      mean_(std::move(channel_mean)),
      std_(std::move(channel_std)) {
  auto shape = base_->domain_shape();
  std::size_t channels = shape.empty() ? 1 : shape[0];
  if (mean_.size() != channels || std_.size() != channels)
    throw std::invalid_argument("normalized field: stats do not match channels");
  for (double s : std_)
    if (!(s > 0)) throw std::invalid_argument("normalized field: std must be > 0");
  std::size_t total = base_->domain_numel();
  std::size_t per = total / channels;
  elem_mean_.resize(total);
  elem_std_.resize(total);
  for (std::size_t e = 0; e < total; e++) {
    elem_mean_[e] = mean_[e / per];
    elem_std_[e] = std_[e / per];
  }
}

std::string NormalizedField::descriptor() const {
  return "normalized(" + base_->descriptor() + ")";
}

Tensor NormalizedField::denorm(const Tensor& x) const {
  check_domain(x);
  Tensor out = x;
  for (std::size_t e = 0; e < out.numel(); e++)
    out.data[e] = elem_mean_[e] + elem_std_[e] * out.data[e];
  return out;
}

Tensor NormalizedField::chain(Tensor g) const {
  for (std::size_t e = 0; e < g.numel(); e++) g.data[e] *= elem_std_[e];
  return g;
}

Tensor NormalizedField::residual(const Tensor& x) const {
  return base_->residual(denorm(x));
}
double NormalizedField::log_lc(const Tensor& x) const {
  return base_->log_lc(denorm(x));
}
Tensor NormalizedField::grad_log_lc(const Tensor& x) const {
  return chain(base_->grad_log_lc(denorm(x)));
}
Tensor NormalizedField::hvp_log_lc(const Tensor& x, const Tensor& v) const {
  Tensor sv = v;
  for (std::size_t e = 0; e < sv.numel(); e++) sv.data[e] *= elem_std_[e];
  return chain(base_->hvp_log_lc(denorm(x), sv));
}
double NormalizedField::sq_residual_norm(const Tensor& x) const {
  return base_->sq_residual_norm(denorm(x));
}
Tensor NormalizedField::grad_sq_residual_norm(const Tensor& x) const {
  return chain(base_->grad_sq_residual_norm(denorm(x)));
}

// -------------------------------------------------------- misspecification

DarcyField misspecify_darcy(const DarcyField& field, double f_max_constraint) {
  return DarcyField(field.grid(),
                    DarcySource::make(field.grid(), f_max_constraint));
}

HelmholtzField misspecify_helmholtz(const HelmholtzField& field, double sigma_obs,
                                    Rng& rng) {
  if (sigma_obs < 0)
    throw std::invalid_argument("misspecify_helmholtz: sigma_obs must be >= 0");
  double k = field.wavenumber() + sigma_obs * rng.normal();
  return HelmholtzField(field.grid(), k);
}

}  // namespace scdiff
