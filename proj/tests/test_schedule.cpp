#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scdiff/schedule.hpp"

using namespace scdiff;

TEST_CASE("noising is x0 + sigma * eps") {
  Tensor x0 = Tensor::zeros({3});
  Tensor eps = Tensor::full({3}, 1.0);
  Tensor xt = noising(x0, 2.0, eps);
  for (double v : xt.data) CHECK(v == 2.0);
  CHECK_THROWS(noising(x0, -0.1, eps));
  CHECK_THROWS(noising(x0, 1.0, Tensor::zeros({4})));
}

TEST_CASE("truncated log-normal sampler respects the support and mean") {
  NoiseLevelDist dist;  // mu=-2, s=1.7, ln_min=-4
  Rng rng(42);
  double lo = std::exp(dist.ln_min);
  const int n = 1000000;
  double sum = 0;
  for (int i = 0; i < n; i++) {
    double s = sample_noise_level(dist, rng);
    REQUIRE(s >= lo);
    sum += s;
  }
  double mean = sum / n;
  double analytic = truncated_lognormal_mean(dist);
  CHECK(std::abs(mean - analytic) / analytic < 0.01);
}

TEST_CASE("degenerate truncation support is rejected") {
  NoiseLevelDist dist;
  dist.ln_min = dist.mu + 6.0 * dist.s;
  Rng rng(1);
  CHECK_THROWS(sample_noise_level(dist, rng));
}

TEST_CASE("an effectively untruncated bound leaves the mean log-normal") {
  NoiseLevelDist dist;
  dist.mu = -1.5;
  dist.s = 1.2;
  dist.ln_min = dist.mu - 12.0 * dist.s;
  double analytic = truncated_lognormal_mean(dist);
  double lognormal = std::exp(dist.mu + 0.5 * dist.s * dist.s);
  CHECK(analytic == doctest::Approx(lognormal).epsilon(1e-9));
}

TEST_CASE("loss weight closed form") {
  CHECK(loss_weight(1.0, 1.0) == doctest::Approx(2.0));
  CHECK(loss_weight(2.0, 0.5) == doctest::Approx((4.0 + 0.25) / 1.0));
  CHECK_THROWS(loss_weight(0.0, 1.0));
  CHECK_THROWS(loss_weight(1.0, 0.0));
}

TEST_CASE("karras grid endpoints, ordering, and the appended zero") {
  NoiseSchedule sched;
  auto grid = karras_time_grid(sched, 100);
  REQUIRE(grid.size() == 101);
  CHECK(grid.front() == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(grid[99] == doctest::Approx(0.002).epsilon(1e-12));
  CHECK(grid.back() == 0.0);
  for (std::size_t i = 0; i + 1 < grid.size(); i++) CHECK(grid[i] > grid[i + 1]);

  auto two = karras_time_grid(sched, 2);
  REQUIRE(two.size() == 3);
  CHECK(two[0] == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(0.002).epsilon(1e-12));
  CHECK(two[2] == 0.0);

  auto one = karras_time_grid(sched, 1);
  REQUIRE(one.size() == 2);
  CHECK(one[0] == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(one[1] == 0.0);

  NoiseSchedule bad;
  bad.sigma_min = 0;
  CHECK_THROWS(karras_time_grid(bad, 10));
}
