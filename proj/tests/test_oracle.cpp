#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scdiff/oracle.hpp"

using namespace scdiff;

namespace {

GaussianLinearSetup demo_setup(double lambda, double sigma = 1.0) {
  GaussianLinearSetup s;
  s.m0 = Tensor({2}, {0.4, -0.2});
  s.s0 = 0.8;
  double inv = 1.0 / std::sqrt(5.0);
  s.a = Tensor({2}, {2.0 * inv, 1.0 * inv});
  s.b = 0.3;
  s.lambda = lambda;
  s.sigma = sigma;
  return s;
}

double stationarity_residual(const GaussianLinearSetup& s, const Tensor& mu,
                             const Tensor& y) {
  // ||2(y - mu) + 2 lambda a (a'y - b)|| for the linear residual
  double ay = 0;
  for (std::size_t c = 0; c < y.numel(); c++) ay += s.a.data[c] * y.data[c];
  double worst = 0;
  for (std::size_t c = 0; c < y.numel(); c++) {
    double r = 2.0 * (y.data[c] - mu.data[c]) +
               2.0 * s.lambda * s.a.data[c] * (ay - s.b);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

}  // namespace

TEST_CASE("posterior mean closed form") {
  GaussianLinearSetup s = demo_setup(0.0);
  s.m0 = Tensor({1}, {0.0});
  s.a = Tensor({1}, {1.0});
  s.s0 = 1.0;
  s.sigma = 1.0;
  Tensor x = Tensor({1}, {2.0});
  CHECK(posterior_mean(s, x).value() == doctest::Approx(1.0).epsilon(1e-15));

  s.sigma = 1e-9;
  CHECK(posterior_mean(s, x).value() == doctest::Approx(2.0).epsilon(1e-12));

  GaussianLinearSetup t = demo_setup(0.0);
  Tensor at_mean = posterior_mean(t, t.m0);
  for (std::size_t c = 0; c < 2; c++)
    CHECK(at_mean.data[c] == doctest::Approx(t.m0.data[c]).epsilon(1e-15));

  SUBCASE("setup validation") {
    GaussianLinearSetup bad = demo_setup(0.0);
    bad.a = Tensor({2}, {1.0, 1.0});  // not unit
    CHECK_THROWS_AS(posterior_mean(bad, Tensor({2})), std::invalid_argument);
    bad = demo_setup(0.0);
    bad.s0 = 0.0;
    CHECK_THROWS_AS(posterior_mean(bad, Tensor({2})), std::invalid_argument);
    bad = demo_setup(-1.0);
    CHECK_THROWS_AS(posterior_mean(bad, Tensor({2})), std::invalid_argument);
  }
}

TEST_CASE("regularized optimum closed form") {
  Rng rng(4);
  GaussianLinearSetup s = demo_setup(1.7, 0.9);
  Tensor x = rng.normal_tensor({6, 2}, 1.3);
  Tensor mu = posterior_mean(s, x);
  Tensor y = regularized_optimum(s, x);

  SUBCASE("stationarity holds exactly") {
    for (std::size_t r = 0; r < x.rows(); r++)
      CHECK(stationarity_residual(s, mu.row_as(r, {2}), y.row_as(r, {2})) <=
            1e-12);
  }

  SUBCASE("lambda zero returns the posterior mean bitwise") {
    GaussianLinearSetup z = demo_setup(0.0, 0.9);
    Tensor y0 = regularized_optimum(z, x);
    CHECK(y0.data == posterior_mean(z, x).data);
  }

  SUBCASE("already-satisfied constraint leaves the mean alone") {
    GaussianLinearSetup z = demo_setup(5.0, 0.9);
    Tensor one({2}, {1.0, 0.0});
    Tensor mu1 = posterior_mean(z, one);
    double amu = z.a.data[0] * mu1.data[0] + z.a.data[1] * mu1.data[1];
    z.b = amu;
    Tensor y1 = regularized_optimum(z, one);
    for (std::size_t c = 0; c < 2; c++)
      CHECK(y1.data[c] == doctest::Approx(mu1.data[c]).epsilon(1e-15));
  }

  SUBCASE("large lambda projects onto the constraint") {
    GaussianLinearSetup z = demo_setup(1e12, 0.9);
    Tensor yp = regularized_optimum(z, x);
    for (std::size_t r = 0; r < x.rows(); r++) {
      double ay = 0;
      for (std::size_t c = 0; c < 2; c++) ay += z.a.data[c] * yp.at2(r, c);
      CHECK(ay == doctest::Approx(z.b).epsilon(1e-9));
    }
  }
}

TEST_CASE("fixed point iteration reproduces closed forms and handles nonlinear residuals") {
  GaussianLinearSetup s = demo_setup(2.5, 0.7);
  Rng rng(9);
  Tensor x = rng.normal_tensor({2}, 1.0);
  Tensor mu = posterior_mean(s, x);
  Tensor want = regularized_optimum(s, x);
  LinearField lin(s.a, s.b);
  Tensor got = regularized_fixed_point(lin, s.lambda, mu);
  for (std::size_t c = 0; c < 2; c++)
    CHECK(got.data[c] == doctest::Approx(want.data[c]).epsilon(1e-9));

  SUBCASE("circle residual spot check") {
    CircleField circ(1.0);
    Tensor mu2({2}, {1.6, 0.3});
    double lambda = 3.0;
    Tensor y = regularized_fixed_point(circ, lambda, mu2, 0.3, 1e-12);
    // Stationarity of ||y - mu||^2 + lambda ||R||^2 at the returned point.
    Tensor g = circ.grad_sq_residual_norm(y);
    for (std::size_t c = 0; c < 2; c++)
      CHECK(std::abs(y.data[c] - mu2.data[c] + 0.5 * lambda * g.data[c]) <=
            1e-10);
    // The solution moves from mu toward the circle.
    double rm = std::hypot(mu2.data[0], mu2.data[1]);
    double ry = std::hypot(y.data[0], y.data[1]);
    CHECK(std::abs(ry - 1.0) < std::abs(rm - 1.0));
    CHECK(std::abs(ry - rm) > 1e-3);
  }
}

TEST_CASE("prop 2: mse gap equals squared shift") {
  Rng rng(17);
  GaussianLinearSetup s = demo_setup(1.0, 1.0);
  Prop2Report rep = verify_prop2(s, 1000000, rng);
  CHECK(rep.ratio == doctest::Approx(1.0).epsilon(0.02));
  CHECK(rep.shift_sq == doctest::Approx(expected_shift_sq(s)).epsilon(0.02));

  SUBCASE("lambda zero gives an exactly zero gap") {
    GaussianLinearSetup z = demo_setup(0.0, 1.0);
    Prop2Report r0 = verify_prop2(z, 20000, rng);
    CHECK(r0.mse_gap == 0.0);
    CHECK(r0.shift_sq == 0.0);
    CHECK(r0.ratio == 1.0);
  }

  SUBCASE("closed-form gap grows with lambda") {
    double prev = 0;
    for (double lam : {0.1, 1.0, 10.0}) {
      double shift = expected_shift_sq(demo_setup(lam, 1.0));
      CHECK(shift > prev);
      prev = shift;
    }
  }

  SUBCASE("identity holds across sigma and s0 variations") {
    for (double sig : {0.3, 2.0}) {
      GaussianLinearSetup v = demo_setup(2.0, sig);
      v.s0 = 1.4;
      Prop2Report r = verify_prop2(v, 400000, rng);
      CHECK(r.ratio == doctest::Approx(1.0).epsilon(0.02));
    }
  }
}

TEST_CASE("prop 1: trained denoiser approaches the shifted optimum") {
  GaussianLinearSetup s = demo_setup(1.0, 0.8);
  Rng rng(23);
  Prop1Report rep = verify_prop1(s, 3000, rng);
  CHECK(rep.max_rel_deviation < 0.1);
  CHECK(rep.train_iters == 3000);
  CHECK(std::isfinite(rep.final_loss));

  SUBCASE("lambda zero recovers the posterior mean") {
    GaussianLinearSetup z = demo_setup(0.0, 0.8);
    Rng r2(23);
    Prop1Report rep0 = verify_prop1(z, 3000, r2);
    CHECK(rep0.max_rel_deviation < 0.1);
  }

  SUBCASE("deviation shrinks with the training budget") {
    std::vector<double> devs;
    for (std::size_t budget : {400u, 1600u, 6400u}) {
      Rng rb(23);
      devs.push_back(verify_prop1(s, budget, rb).max_rel_deviation);
    }
    CHECK(devs[1] <= devs[0] * 1.1);
    CHECK(devs[2] <= devs[1] * 1.1);
    CHECK(devs[2] < 0.08);
  }
}
