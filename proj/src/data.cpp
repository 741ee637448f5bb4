#include "scdiff/data.hpp"

#include "scdiff/version.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

namespace scdiff {

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Json generator_manifest(const std::string& generator, std::uint64_t stream_base) {
  Json j;
  j["generator"] = generator;
  j["stream_base"] = stream_base;
  return j;
}

}  // namespace

// ---------------------------------------------------------------- dataset

void Dataset::compute_stats() {
  std::size_t ch = channels(), per = dim() / ch, n = size();
  channel_mean.assign(ch, 0.0);
  channel_std.assign(ch, 0.0);
  double count = double(n * per);
  for (std::size_t c = 0; c < ch; c++) {
    double s = 0;
    for (std::size_t r = 0; r < n; r++)
      for (std::size_t k = 0; k < per; k++) s += samples.at2(r, c * per + k);
    double mu = s / count;
    double v = 0;
    for (std::size_t r = 0; r < n; r++)
      for (std::size_t k = 0; k < per; k++) {
        double d = samples.at2(r, c * per + k) - mu;
        v += d * d;
      }
    double sd = std::sqrt(v / count);
    if (!(sd > 1e-12))
      throw std::runtime_error("dataset: channel " + std::to_string(c) +
                               " is constant, cannot normalize");
    channel_mean[c] = mu;
    channel_std[c] = sd;
  }
}

Tensor Dataset::normalize_rows(const Tensor& raw) const {
  if (channel_mean.size() != channels())
    throw std::runtime_error("dataset: stats not computed");
  if (raw.cols() != dim())
    throw std::invalid_argument("dataset: row width mismatch");
  std::size_t ch = channels(), per = dim() / ch;
  Tensor out = raw;
  for (std::size_t r = 0; r < out.rows(); r++)
    for (std::size_t c = 0; c < ch; c++)
      for (std::size_t k = 0; k < per; k++) {
        double& v = out.at2(r, c * per + k);
        v = (v - channel_mean[c]) / channel_std[c];
      }
  return out;
}

Tensor Dataset::denormalize(const Tensor& normalized) const {
  if (channel_mean.size() != channels())
    throw std::runtime_error("dataset: stats not computed");
  if (normalized.cols() != dim())
    throw std::invalid_argument("dataset: row width mismatch");
  std::size_t ch = channels(), per = dim() / ch;
  Tensor out = normalized;
  for (std::size_t r = 0; r < out.rows(); r++)
    for (std::size_t c = 0; c < ch; c++)
      for (std::size_t k = 0; k < per; k++) {
        double& v = out.at2(r, c * per + k);
        v = v * channel_std[c] + channel_mean[c];
      }
  return out;
}

Tensor Dataset::normalized() const { return normalize_rows(samples); }

void save_dataset(const std::string& path, const Dataset& ds) {
  Container c;
  c.meta["kind"] = "dataset";
  c.meta["toolkit"] = kVersion;
  c.meta["sample_shape"] = ds.sample_shape;
  c.meta["descriptor"] = ds.descriptor;
  c.meta["channel_mean"] = ds.channel_mean;
  c.meta["channel_std"] = ds.channel_std;
  c.meta["manifest"] = ds.manifest;
  c.tensors.emplace_back("samples", ds.samples);
  write_container(path, c);
}

Dataset load_dataset(const std::string& path) {
  Container c = read_container(path);
  if (!c.meta.contains("kind") || c.meta.at("kind") != "dataset")
    throw std::runtime_error("load_dataset: " + path + " is not a dataset file");
  Dataset ds;
  ds.sample_shape = c.meta.at("sample_shape").get<std::vector<std::size_t>>();
  ds.descriptor = c.meta.at("descriptor").get<std::string>();
  ds.channel_mean = c.meta.at("channel_mean").get<std::vector<double>>();
  ds.channel_std = c.meta.at("channel_std").get<std::vector<double>>();
  if (c.meta.contains("manifest")) ds.manifest = c.meta.at("manifest");
  ds.samples = c.tensor("samples");
  if (ds.samples.cols() != ds.dim())
    throw std::runtime_error("load_dataset: sample width does not match shape");
  return ds;
}

// ----------------------------------------------------------------- circles

Dataset sample_unit_circle(std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_unit_circle: n must be >= 1");
  Dataset ds;
  ds.sample_shape = {2};
  ds.descriptor = "unit-circle";
  ds.manifest = generator_manifest(ds.descriptor, 0);
  ds.samples = Tensor({n, 2});
  for (std::size_t i = 0; i < n; i++) {
    double th = 2.0 * kPi * rng.uniform();
    ds.samples.at2(i, 0) = std::cos(th);
    ds.samples.at2(i, 1) = std::sin(th);
  }
  ds.compute_stats();
  return ds;
}

double dent_radius(double theta) {
  double w = std::fmod(theta - kPi / 2.0 + kPi, 2.0 * kPi);
  if (w < 0) w += 2.0 * kPi;
  double u = (w - kPi) / 1.2;
  if (std::abs(u) >= 1.0) return 1.0;
  double q = 1.0 - u * u;
  double bump = q * q * q * q * q;
  return 1.0 - 0.25 * bump * (1.0 + 0.6 * (1.0 - 2.0 * u * u));
}

Dataset sample_dent(std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_dent: n must be >= 1");
  Dataset ds;
  ds.sample_shape = {2};
  ds.descriptor = "dent-circle";
  ds.manifest = generator_manifest(ds.descriptor, 0);
  ds.samples = Tensor({n, 2});
  for (std::size_t i = 0; i < n; i++) {
    double th = 2.0 * kPi * rng.uniform();
    double r = dent_radius(th);
    ds.samples.at2(i, 0) = r * std::cos(th);
    ds.samples.at2(i, 1) = r * std::sin(th);
  }
  ds.compute_stats();
  return ds;
}

Dataset sample_chop(std::size_t n, double alpha, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_chop: n must be >= 1");
  if (!(alpha >= 0.0 && alpha <= kPi))
    throw std::invalid_argument("sample_chop: alpha must lie in [0, pi]");
  Dataset ds;
  ds.sample_shape = {2};
  ds.descriptor = "chop-circle(alpha=" + fmt("%.12g", alpha) + ")";
  ds.manifest = generator_manifest(ds.descriptor, 0);
  ds.samples = Tensor({n, 2});
  for (std::size_t i = 0; i < n; i++) {
    double th = 2.0 * kPi * rng.uniform();
    double x = std::cos(th), y = std::sin(th);
    double phi = std::atan2(y, x);
    if (phi > -alpha && phi < alpha) x = std::cos(alpha);
    ds.samples.at2(i, 0) = x;
    ds.samples.at2(i, 1) = y;
  }
  ds.compute_stats();
  return ds;
}

// -------------------------------------------------------------------- grf

Tensor gaussian_random_field(const GridSpec& grid, double length_scale,
                             std::size_t n_modes, Rng& rng) {
  if (!(length_scale > 0))
    throw std::invalid_argument("gaussian_random_field: length scale must be > 0");
  if (n_modes < 1)
    throw std::invalid_argument("gaussian_random_field: need at least one mode");
  std::size_t n = grid.n;
  double h = grid.h();
  Tensor g({n, n});
  double amp = std::sqrt(2.0 / double(n_modes));
  for (std::size_t m = 0; m < n_modes; m++) {
    double wx = rng.normal() / length_scale;
    double wy = rng.normal() / length_scale;
    double phase = 2.0 * kPi * rng.uniform();
    double z = rng.normal();
    for (std::size_t i = 0; i < n; i++) {
      double px = wx * double(i) * h + phase;
      for (std::size_t j = 0; j < n; j++)
        g.at2(i, j) += amp * z * std::cos(px + wy * double(j) * h);
    }
  }
  return g;
}

// ------------------------------------------------------------------ solves

namespace {

using MatVec = std::function<void(const std::vector<double>&, std::vector<double>&)>;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); i++) s += a[i] * b[i];
  return s;
}

void project_mean(std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= double(v.size());
  for (double& x : v) x -= m;
}

// Jacobi-preconditioned CG. When deflate is set the constant direction is
// projected out of every preconditioned residual, which keeps the iteration
// inside the solvable complement of a singular operator's nullspace.
std::vector<double> conjugate_gradient(const MatVec& apply,
                                       const std::vector<double>& diag,
                                       const std::vector<double>& b,
                                       bool deflate, const char* what) {
  std::size_t m = b.size();
  std::vector<double> x(m, 0.0), r = b, z(m), p(m), Ap(m);
  if (deflate) project_mean(r);
  double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0) return x;
  auto precond = [&](const std::vector<double>& rin, std::vector<double>& zout) {
    for (std::size_t i = 0; i < m; i++) zout[i] = rin[i] / diag[i];
    if (deflate) project_mean(zout);
  };
  precond(r, z);
  p = z;
  double rz = dot(r, z);
  const std::size_t cap = 20000;
  for (std::size_t it = 0; it < cap; it++) {
    if (std::sqrt(dot(r, r)) <= 1e-10 * bnorm) return x;
    apply(p, Ap);
    double alpha = rz / dot(p, Ap);
    for (std::size_t i = 0; i < m; i++) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    if (deflate) project_mean(r);
    precond(r, z);
    double rz_next = dot(r, z);
    double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < m; i++) p[i] = z[i] + beta * p[i];
  }
  double rel = std::sqrt(dot(r, r)) / bnorm;
  if (rel > 1e-8)
    throw std::runtime_error(std::string(what) +
                             ": cg did not converge (rel residual " +
                             fmt("%.3g", rel) + ")");
  return x;
}

// Zero-flux finite-volume Darcy operator on the full grid, face permeability
// as the arithmetic mean of the adjacent cells. Applies p -> -div(K grad p).
void darcy_apply(const Tensor& K, const GridSpec& grid,
                 const std::vector<double>& p, std::vector<double>& out) {
  std::size_t n = grid.n;
  double ih2 = 1.0 / (grid.h() * grid.h());
  for (std::size_t i = 0; i < n; i++)
    for (std::size_t j = 0; j < n; j++) {
      std::size_t c = i * n + j;
      double acc = 0;
      if (i + 1 < n) acc += 0.5 * (K.data[c + n] + K.data[c]) * (p[c + n] - p[c]);
      if (i > 0) acc += 0.5 * (K.data[c - n] + K.data[c]) * (p[c - n] - p[c]);
      if (j + 1 < n) acc += 0.5 * (K.data[c + 1] + K.data[c]) * (p[c + 1] - p[c]);
      if (j > 0) acc += 0.5 * (K.data[c - 1] + K.data[c]) * (p[c - 1] - p[c]);
      out[c] = -acc * ih2;
    }
}

std::vector<double> darcy_diag(const Tensor& K, const GridSpec& grid) {
  std::size_t n = grid.n;
  double ih2 = 1.0 / (grid.h() * grid.h());
  std::vector<double> d(n * n);
  for (std::size_t i = 0; i < n; i++)
    for (std::size_t j = 0; j < n; j++) {
      std::size_t c = i * n + j;
      double acc = 0;
      if (i + 1 < n) acc += 0.5 * (K.data[c + n] + K.data[c]);
      if (i > 0) acc += 0.5 * (K.data[c - n] + K.data[c]);
      if (j + 1 < n) acc += 0.5 * (K.data[c + 1] + K.data[c]);
      if (j > 0) acc += 0.5 * (K.data[c - 1] + K.data[c]);
      d[c] = acc * ih2;
    }
  return d;
}

Tensor solve_darcy_pressure(const Tensor& K, const GridSpec& grid,
                            const Tensor& f) {
  std::size_t n = grid.n;
  MatVec apply = [&](const std::vector<double>& p, std::vector<double>& out) {
    darcy_apply(K, grid, p, out);
  };
  std::vector<double> p =
      conjugate_gradient(apply, darcy_diag(K, grid), f.data, true, "darcy solve");
  project_mean(p);  // mean-zero gauge
  Tensor out({n, n});
  out.data = std::move(p);
  return out;
}

// Interior Dirichlet operator u -> -(lap u + k^2 u) with zero boundary,
// positive definite whenever k^2 is below the smallest Laplacian eigenvalue.
Tensor solve_helmholtz_interior(const GridSpec& grid, double k, const Tensor& a) {
  std::size_t n = grid.n, m = n - 2;
  double ih2 = 1.0 / (grid.h() * grid.h());
  double k2 = k * k;
  MatVec apply = [&](const std::vector<double>& u, std::vector<double>& out) {
    for (std::size_t i = 0; i < m; i++)
      for (std::size_t j = 0; j < m; j++) {
        std::size_t c = i * m + j;
        double nb = 0;
        if (i + 1 < m) nb += u[c + m];
        if (i > 0) nb += u[c - m];
        if (j + 1 < m) nb += u[c + 1];
        if (j > 0) nb += u[c - 1];
        out[c] = (4.0 * ih2 - k2) * u[c] - nb * ih2;
      }
  };
  std::vector<double> rhs(m * m), diag(m * m, 4.0 * ih2 - k2);
  for (std::size_t i = 0; i < m; i++)
    for (std::size_t j = 0; j < m; j++) rhs[i * m + j] = -a.at2(i + 1, j + 1);
  std::vector<double> ui =
      conjugate_gradient(apply, diag, rhs, false, "helmholtz solve");
  Tensor u({n, n});
  for (std::size_t i = 0; i < m; i++)
    for (std::size_t j = 0; j < m; j++) u.at2(i + 1, j + 1) = ui[i * m + j];
  return u;
}

}  // namespace

Dataset gen_darcy_dataset(std::size_t n_samples, const GridSpec& grid,
                          const DarcySource& src, double length_scale, Rng& rng) {
  if (grid.n < 9)
    throw std::invalid_argument("gen_darcy_dataset: grid must be at least 9x9");
  if (n_samples < 1)
    throw std::invalid_argument("gen_darcy_dataset: need at least one sample");
  std::size_t n = grid.n, nn = n * n;
  Tensor f = src.field(grid);
  Dataset ds;
  ds.sample_shape = {2, n, n};
  ds.descriptor = "darcy(n=" + std::to_string(n) + ",f_max=" +
                  fmt("%.12g", src.f_max) + ",l=" + fmt("%.12g", length_scale) + ")";
  ds.samples = Tensor({n_samples, 2 * nn});
  std::uint64_t base = rng.bits();
  ds.manifest = generator_manifest(ds.descriptor, base);
  for (std::size_t s = 0; s < n_samples; s++) {
    Rng rs = Rng::substream(base, s);
    Tensor g = gaussian_random_field(grid, length_scale, 256, rs);
    Tensor K({n, n});
    for (std::size_t i = 0; i < nn; i++) K.data[i] = std::exp(g.data[i]);
    Tensor p = solve_darcy_pressure(K, grid, f);
    for (std::size_t i = 0; i < nn; i++) {
      ds.samples.at2(s, i) = K.data[i];
      ds.samples.at2(s, nn + i) = p.data[i];
    }
  }
  ds.compute_stats();
  return ds;
}

Dataset gen_helmholtz_dataset(std::size_t n_samples, const GridSpec& grid,
                              double k, Rng& rng) {
  if (grid.n < 9)
    throw std::invalid_argument("gen_helmholtz_dataset: grid must be at least 9x9");
  if (n_samples < 1)
    throw std::invalid_argument("gen_helmholtz_dataset: need at least one sample");
  std::size_t n = grid.n, nn = n * n, m = n - 2;
  double h = grid.h();
  // Dirichlet Laplacian spectrum on the interior; CG needs k^2 strictly
  // below the smallest eigenvalue, and any near-eigenvalue k is rejected.
  double lam_min = 0, lam_max = 0;
  {
    auto lam1 = [&](std::size_t p) {
      double s = std::sin(double(p) * kPi / (2.0 * double(n - 1)));
      return 4.0 / (h * h) * s * s;
    };
    lam_min = 2.0 * lam1(1);
    lam_max = 2.0 * lam1(m);
    double gap = lam_min;
    for (std::size_t p = 1; p <= m; p++)
      for (std::size_t q = 1; q <= m; q++)
        gap = std::min(gap, std::abs(lam1(p) + lam1(q) - k * k));
    if (gap <= 1e-8 * lam_max)
      throw std::invalid_argument(
          "gen_helmholtz_dataset: k^2 is too close to a Laplacian eigenvalue");
  }
  if (!(k * k < lam_min))
    throw std::invalid_argument(
        "gen_helmholtz_dataset: k^2 must lie below the smallest Laplacian "
        "eigenvalue " +
        fmt("%.6g", lam_min) + " for a definite solve");
  Dataset ds;
  ds.sample_shape = {2, n, n};
  ds.descriptor =
      "helmholtz(n=" + std::to_string(n) + ",k=" + fmt("%.12g", k) + ")";
  ds.samples = Tensor({n_samples, 2 * nn});
  std::uint64_t base = rng.bits();
  ds.manifest = generator_manifest(ds.descriptor, base);
  for (std::size_t s = 0; s < n_samples; s++) {
    Rng rs = Rng::substream(base, s);
    Tensor a = gaussian_random_field(grid, 0.2, 256, rs);
    Tensor u = solve_helmholtz_interior(grid, k, a);
    for (std::size_t i = 0; i < nn; i++) {
      ds.samples.at2(s, i) = u.data[i];
      ds.samples.at2(s, nn + i) = a.data[i];
    }
  }
  ds.compute_stats();
  return ds;
}

}  // namespace scdiff
