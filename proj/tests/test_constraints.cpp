#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "scdiff/constraints.hpp"
#include "scdiff/graph.hpp"
#include "scdiff/rng.hpp"

using namespace scdiff;

namespace {

// FD check of grad_log_lc against log_lc, coordinatewise.
double field_grad_fd_err(const ConstraintField& f, const Tensor& x, double eps) {
  return grad_check(
      [&](const Tensor& v) { return std::make_pair(f.log_lc(v), f.grad_log_lc(v)); },
      x, eps);
}

// FD check of the HVP against a directional difference of the gradient.
double field_hvp_fd_err(const ConstraintField& f, const Tensor& x,
                        const Tensor& dir, double eps) {
  Tensor xp = axpy(eps, dir, x);
  Tensor xm = axpy(-eps, dir, x);
  Tensor gp = f.grad_log_lc(xp);
  Tensor gm = f.grad_log_lc(xm);
  Tensor h = f.hvp_log_lc(x, dir);
  double worst = 0;
  for (std::size_t i = 0; i < h.numel(); i++) {
    double fd = (gp.data[i] - gm.data[i]) / (2 * eps);
    worst = std::max(worst,
                     std::abs(h.data[i] - fd) / std::max(1.0, std::abs(h.data[i])));
  }
  return worst;
}

double field_sqgrad_fd_err(const ConstraintField& f, const Tensor& x, double eps) {
  return grad_check(
      [&](const Tensor& v) {
        return std::make_pair(f.sq_residual_norm(v), f.grad_sq_residual_norm(v));
      },
      x, eps);
}

}  // namespace

TEST_CASE("circle residual closed forms") {
  CircleField f(1.0);
  Tensor x({2}, {2.0, 0.0});
  CHECK(f.residual(x).value() == doctest::Approx(1.0));
  Tensor g = f.grad_log_lc(x);
  CHECK(g.data[0] == doctest::Approx(-2.0));
  CHECK(g.data[1] == doctest::Approx(0.0));

  Tensor origin({2}, {0.0, 0.0});
  Tensor g0 = f.grad_log_lc(origin);
  CHECK(g0.data[0] == 0.0);
  CHECK(g0.data[1] == 0.0);

  CircleField f3(3.0);
  CHECK(f3.residual(x).value() == doctest::Approx(3.0));
  CHECK(f3.descriptor() == "circle(c=3)");

  // on-circle points have zero residual and zero gradient
  Tensor on({2}, {std::sqrt(0.5), std::sqrt(0.5)});
  CHECK(f.residual(on).value() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(norm2(f.grad_log_lc(on)) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("circle residual is rotation invariant") {
  CircleField f(1.0);
  Rng rng(5);
  for (int t = 0; t < 10; t++) {
    double px = rng.normal(), py = rng.normal();
    double a = rng.uniform(0, 6.2831853);
    Tensor x({2}, {px, py});
    Tensor xr({2}, {std::cos(a) * px - std::sin(a) * py,
                    std::sin(a) * px + std::cos(a) * py});
    CHECK(f.residual(x).value() == doctest::Approx(f.residual(xr).value()));
  }
}

TEST_CASE("circle gradient and hvp match finite differences at random points") {
  CircleField f(1.5);
  Rng rng(23);
  for (int t = 0; t < 20; t++) {
    // stay away from the origin where the gradient has its defined kink
    double r = rng.uniform(0.4, 2.0);
    double a = rng.uniform(0, 6.2831853);
    Tensor x({2}, {r * std::cos(a), r * std::sin(a)});
    CHECK(field_grad_fd_err(f, x, 1e-5) <= 1e-5);
    Tensor dir = rng.normal_tensor({2});
    CHECK(field_hvp_fd_err(f, x, dir, 1e-5) <= 1e-4);
    CHECK(field_sqgrad_fd_err(f, x, 1e-5) <= 1e-4);
  }
}

TEST_CASE("darcy source blocks balance and size correctly") {
  GridSpec grid{32};
  DarcySource src = DarcySource::make(grid, 10.0);
  CHECK(src.block == 4);
  Tensor f = src.field(grid);
  double total = 0, mx = 0;
  for (double v : f.data) {
    total += v;
    mx = std::max(mx, std::abs(v));
  }
  CHECK(total == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mx == 10.0);
  CHECK(f.at2(0, 0) == 10.0);
  CHECK(f.at2(3, 3) == 10.0);
  CHECK(f.at2(4, 4) == 0.0);
  CHECK(f.at2(31, 31) == -10.0);

  DarcySource odd = DarcySource::make(GridSpec{9}, 1.0);
  CHECK(odd.block == 2);
}

namespace {

Tensor random_darcy_state(Rng& rng, std::size_t n) {
  Tensor x({2, n, n});
  for (std::size_t e = 0; e < n * n; e++)
    x.data[e] = std::exp(0.3 * rng.normal());          // K > 0
  for (std::size_t e = n * n; e < 2 * n * n; e++)
    x.data[e] = rng.normal();                          // p
  return x;
}

}  // namespace

TEST_CASE("darcy residual is bilinear in K and p") {
  GridSpec grid{12};
  DarcyField field(grid, DarcySource::make(grid, 10.0));
  Rng rng(31);
  std::size_t nn = grid.n * grid.n;
  Tensor f = DarcySource::make(grid, 10.0).field(grid);

  Tensor x1 = random_darcy_state(rng, grid.n);
  Tensor x2 = random_darcy_state(rng, grid.n);
  double a = 0.7, b = -1.3;

  // linear in p with K fixed, after subtracting the source offset
  Tensor xc = x1;
  for (std::size_t e = 0; e < nn; e++)
    xc.data[nn + e] = a * x1.data[nn + e] + b * x2.data[nn + e];
  Tensor x2k = x2;
  for (std::size_t e = 0; e < nn; e++) x2k.data[e] = x1.data[e];
  Tensor rc = field.residual(xc), r1 = field.residual(x1), r2 = field.residual(x2k);
  for (std::size_t i = 1; i + 1 < grid.n; i++)
    for (std::size_t j = 1; j + 1 < grid.n; j++) {
      double fij = f.at2(i, j);
      double lhs = rc.at2(i - 1, j - 1) - fij;
      double rhs = a * (r1.at2(i - 1, j - 1) - fij) + b * (r2.at2(i - 1, j - 1) - fij);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }

  // linear in K with p fixed
  Tensor yc = x1;
  for (std::size_t e = 0; e < nn; e++)
    yc.data[e] = a * x1.data[e] + b * x2.data[e];
  Tensor y2 = x2;
  for (std::size_t e = 0; e < nn; e++) y2.data[nn + e] = x1.data[nn + e];
  Tensor sc = field.residual(yc), s1 = field.residual(x1), s2 = field.residual(y2);
  for (std::size_t i = 0; i < sc.numel(); i++) {
    double fij = 0;
    {
      std::size_t ii = i / (grid.n - 2) + 1, jj = i % (grid.n - 2) + 1;
      fij = f.at2(ii, jj);
    }
    CHECK(sc.data[i] - fij ==
          doctest::Approx(a * (s1.data[i] - fij) + b * (s2.data[i] - fij))
              .epsilon(1e-9));
  }
}

TEST_CASE("darcy gradient and hvp match finite differences") {
  GridSpec grid{10};
  DarcyField field(grid, DarcySource::make(grid, 10.0));
  Rng rng(71);
  for (int t = 0; t < 20; t++) {
    Tensor x = random_darcy_state(rng, grid.n);
    CHECK(field_grad_fd_err(field, x, 1e-5) <= 1e-5);
    Tensor dir = rng.normal_tensor({2, grid.n, grid.n});
    CHECK(field_hvp_fd_err(field, x, dir, 1e-5) <= 1e-4);
  }
  Tensor x = random_darcy_state(rng, grid.n);
  CHECK(field_sqgrad_fd_err(field, x, 1e-5) <= 1e-4);
}

TEST_CASE("helmholtz residual, gradient, and vanishing hvp") {
  GridSpec grid{10};
  HelmholtzField field(grid, 1.0);
  Rng rng(91);

  Tensor x1 = rng.normal_tensor({2, grid.n, grid.n});
  Tensor x2 = rng.normal_tensor({2, grid.n, grid.n});
  double a = 1.4, b = -0.6;
  Tensor xc = x1;
  for (std::size_t e = 0; e < xc.numel(); e++)
    xc.data[e] = a * x1.data[e] + b * x2.data[e];
  Tensor rc = field.residual(xc), r1 = field.residual(x1), r2 = field.residual(x2);
  for (std::size_t i = 0; i < rc.numel(); i++)
    CHECK(rc.data[i] ==
          doctest::Approx(a * r1.data[i] + b * r2.data[i]).epsilon(1e-9));

  for (int t = 0; t < 20; t++) {
    Tensor x = rng.normal_tensor({2, grid.n, grid.n});
    CHECK(field_grad_fd_err(field, x, 1e-5) <= 1e-5);
  }
  Tensor h = field.hvp_log_lc(x1, x2);
  for (double v : h.data) CHECK(v == 0.0);
  CHECK(field_sqgrad_fd_err(field, x1, 1e-5) <= 1e-4);
}

TEST_CASE("linear field closed forms") {
  Tensor a({2}, {0.6, 0.8});
  LinearField f(a, 0.5);
  Tensor x({2}, {1.0, 1.0});
  CHECK(f.residual(x).value() == doctest::Approx(0.9));
  CHECK(f.log_lc(x) == doctest::Approx(-0.9));
  Tensor g = f.grad_log_lc(x);
  CHECK(g.data[0] == doctest::Approx(-0.6));
  Tensor h = f.hvp_log_lc(x, a);
  CHECK(norm2(h) == 0.0);
  Tensor gs = f.grad_sq_residual_norm(x);
  CHECK(gs.data[0] == doctest::Approx(2 * 0.9 * 0.6));
}

TEST_CASE("normalized wrapper evaluates the base field on denormalized values") {
  auto base = std::make_shared<CircleField>(1.0);
  NormalizedField f(base, {0.1, -0.2}, {2.0, 0.5});
  Rng rng(111);
  for (int t = 0; t < 20; t++) {
    Tensor xn = rng.uniform_tensor({2}, -1.0, 1.0);
    Tensor raw({2}, {0.1 + 2.0 * xn.data[0], -0.2 + 0.5 * xn.data[1]});
    if (std::hypot(raw.data[0], raw.data[1]) < 0.3) continue;
    CHECK(f.log_lc(xn) == doctest::Approx(base->log_lc(raw)));
    CHECK(field_grad_fd_err(f, xn, 1e-5) <= 1e-5);
    Tensor dir = rng.normal_tensor({2});
    CHECK(field_hvp_fd_err(f, xn, dir, 1e-5) <= 1e-4);
    CHECK(field_sqgrad_fd_err(f, xn, 1e-5) <= 1e-4);
  }
  CHECK_THROWS(NormalizedField(base, {0.0}, {1.0}));
  CHECK_THROWS(NormalizedField(base, {0.0, 0.0}, {1.0, 0.0}));
}

TEST_CASE("misspecification rescales only the constraint side") {
  GridSpec grid{16};
  DarcyField field(grid, DarcySource::make(grid, 10.0));
  DarcyField wrong = misspecify_darcy(field, 40.0);
  CHECK(wrong.source().f_max == 40.0);
  CHECK(field.source().f_max == 10.0);

  Rng rng(5);
  Tensor x = random_darcy_state(rng, grid.n);
  // residuals differ exactly by the source delta inside the blocks
  Tensor r0 = field.residual(x), r1 = wrong.residual(x);
  Tensor df0 = DarcySource::make(grid, 10.0).field(grid);
  Tensor df1 = DarcySource::make(grid, 40.0).field(grid);
  for (std::size_t i = 1; i + 1 < grid.n; i++)
    for (std::size_t j = 1; j + 1 < grid.n; j++)
      CHECK(r1.at2(i - 1, j - 1) - r0.at2(i - 1, j - 1) ==
            doctest::Approx(df1.at2(i, j) - df0.at2(i, j)).epsilon(1e-12));

  HelmholtzField h(grid, 1.0);
  Rng r1a(7), r1b(7);
  HelmholtzField ha = misspecify_helmholtz(h, 0.1, r1a);
  HelmholtzField hb = misspecify_helmholtz(h, 0.1, r1b);
  CHECK(ha.wavenumber() == hb.wavenumber());  // reproducible draw
  CHECK(ha.wavenumber() != 1.0);
  HelmholtzField h0 = misspecify_helmholtz(h, 0.0, r1a);
  CHECK(h0.wavenumber() == 1.0);
  CHECK(ha.descriptor().find("k=") != std::string::npos);
}
