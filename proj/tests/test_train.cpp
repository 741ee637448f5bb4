#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <string>

#include "scdiff/constraints.hpp"
#include "scdiff/train.hpp"

using namespace scdiff;

TEST_CASE("adam matches a hand-computed step") {
  ParamSet ps;
  ps.add("w", Tensor({1}, {1.0}));
  AdamState st = AdamState::init(ps, 0.1);
  adam_step(ps, st, {Tensor({1}, {0.5})});

  double m = 0.1 * 0.5, v = 0.001 * 0.25;
  double want = 1.0 - 0.1 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
  CHECK(ps.values[0].data[0] == doctest::Approx(want).epsilon(1e-15));

  adam_step(ps, st, {Tensor({1}, {-0.25})});
  double m2 = 0.9 * m + 0.1 * (-0.25);
  double v2 = 0.999 * v + 0.001 * 0.0625;
  double bc1 = 1.0 - 0.9 * 0.9, bc2 = 1.0 - 0.999 * 0.999;
  want -= 0.1 * (m2 / bc1) / (std::sqrt(v2 / bc2) + 1e-8);
  CHECK(ps.values[0].data[0] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("adam rejects non-finite gradients by name") {
  ParamSet ps;
  ps.add("mlp.w0", Tensor({2}, {1.0, 2.0}));
  AdamState st = AdamState::init(ps, 0.1);
  Tensor bad({2}, {1.0, std::nan("")});
  CHECK_THROWS_WITH_AS(adam_step(ps, st, {bad}),
                       "adam: non-finite gradient for mlp.w0", std::runtime_error);
}

TEST_CASE("global norm clip") {
  std::vector<Tensor> gs = {Tensor({2}, {3.0, 0.0}), Tensor({1}, {4.0})};
  CHECK(clip_global_norm(gs, 10.0) == doctest::Approx(5.0));
  CHECK(gs[0].data[0] == 3.0);  // under the cap, untouched

  std::vector<Tensor> big = {Tensor({2}, {30.0, 0.0}), Tensor({1}, {40.0})};
  CHECK(clip_global_norm(big, 10.0) == doctest::Approx(50.0));
  CHECK(big[0].data[0] == doctest::Approx(6.0));
  CHECK(big[1].data[0] == doctest::Approx(8.0));
}

TEST_CASE("ema update") {
  ParamSet ema, cur;
  ema.add("w", Tensor({2}, {1.0, -2.0}));
  cur.add("w", Tensor({2}, {3.0, 2.0}));
  ema_update(ema, cur, 0.5);
  CHECK(ema.values[0].data[0] == doctest::Approx(2.0));
  CHECK(ema.values[0].data[1] == doctest::Approx(0.0));
}

TEST_CASE("dsm loss matches the weighted closed form on a pure-skip model") {
  Rng rng(5);
  auto m = DenoiserModel::init(Variant::vanilla, {2}, 0.8, nullptr, rng, 8, 2);
  NoiseSchedule sched;
  sched.sigma_data = 0.8;

  Tensor x0 = rng.normal_tensor({3, 2});
  Tensor xt = rng.normal_tensor({3, 2});
  std::vector<double> sigmas = {0.4, 1.0, 2.5};

  Graph g;
  auto refs = leaf_all(g, m.params);
  VarRef loss = dsm_loss(g, m, refs, g.constant(x0), g.constant(xt), sigmas, sched);

  double want = 0;
  for (std::size_t i = 0; i < 3; i++) {
    double c_skip = precond(sigmas[i], 0.8).c_skip;
    double sq = 0;
    for (std::size_t j = 0; j < 2; j++) {
      double diff = c_skip * xt.at2(i, j) - x0.at2(i, j);
      sq += diff * diff;
    }
    want += loss_weight(sigmas[i], 0.8) * sq;
  }
  want /= 3.0;
  CHECK(g.val(loss).value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("pidm loss with lambda 0 is bit-identical to dsm") {
  Rng rng(7);
  auto m = DenoiserModel::init(Variant::pidm, {2}, 1.0, nullptr, rng, 8, 2);
  CircleField field(1.0);
  NoiseSchedule sched;
  Tensor x0 = rng.normal_tensor({4, 2});
  Tensor xt = rng.normal_tensor({4, 2});
  std::vector<double> sigmas = {0.3, 0.6, 1.2, 2.0};

  Graph ga;
  auto ra = leaf_all(ga, m.params);
  VarRef la = dsm_loss(ga, m, ra, ga.constant(x0), ga.constant(xt), sigmas, sched);
  Gradients grads_a = backward(ga, la);

  Graph gb;
  auto rb = leaf_all(gb, m.params);
  VarRef lb = pidm_loss(gb, m, rb, gb.constant(x0), gb.constant(xt), sigmas, sched,
                        field, 0.0);
  Gradients grads_b = backward(gb, lb);

  CHECK(ga.val(la).value() == gb.val(lb).value());
  for (std::size_t k = 0; k < m.params.size(); k++)
    CHECK(grads_a.of(ra[k]).data == grads_b.of(rb[k]).data);
}

TEST_CASE("pidm loss adds the mean squared residual of the denoised batch") {
  Rng rng(9);
  auto m = DenoiserModel::init(Variant::pidm, {2}, 1.0, nullptr, rng, 8, 2);
  CircleField field(2.0);
  NoiseSchedule sched;
  Tensor x0 = rng.normal_tensor({3, 2});
  Tensor xt = rng.normal_tensor({3, 2});
  std::vector<double> sigmas = {0.5, 1.0, 1.5};
  double lambda = 0.7;

  Graph g;
  auto refs = leaf_all(g, m.params);
  VarRef base = dsm_loss(g, m, refs, g.constant(x0), g.constant(xt), sigmas, sched);
  Graph g2;
  auto refs2 = leaf_all(g2, m.params);
  VarRef full = pidm_loss(g2, m, refs2, g2.constant(x0), g2.constant(xt), sigmas,
                          sched, field, lambda);

  double pen = 0;
  for (std::size_t i = 0; i < 3; i++) {
    Tensor row = m.denoise(xt.row_as(i, {1, 2}), sigmas[i]).row_as(0, {2});
    pen += field.sq_residual_norm(row);
  }
  pen /= 3.0;
  CHECK(g2.val(full).value() ==
        doctest::Approx(g.val(base).value() + lambda * pen).epsilon(1e-12));
}

TEST_CASE("training is deterministic and honors the iteration cap") {
  Rng rng(11);
  Tensor data = rng.normal_tensor({100, 2});
  auto init = DenoiserModel::init(Variant::vanilla, {2}, 1.0, nullptr, rng, 8, 2);
  NoiseSchedule sched;
  TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.max_iters = 30;
  cfg.batch = 32;
  cfg.lr = 1e-3;
  cfg.seed = 42;
  cfg.log_every = 10;

  DenoiserModel a = init, b = init;
  TrainStats sa = train(a, data, cfg, sched);
  TrainStats sb = train(b, data, cfg, sched);
  CHECK(sa.iters == 30);
  CHECK(sa.trace.size() == 3);
  REQUIRE(sa.trace.size() == sb.trace.size());
  for (std::size_t i = 0; i < sa.trace.size(); i++) {
    CHECK(sa.trace[i].iter == sb.trace[i].iter);
    CHECK(sa.trace[i].loss == sb.trace[i].loss);
  }
  for (std::size_t k = 0; k < a.params.size(); k++)
    CHECK(a.params.values[k].data == b.params.values[k].data);

  // 100 rows, batch 32: the trailing 4 rows are dropped each epoch
  cfg.max_iters = 0;
  cfg.epochs = 3;
  DenoiserModel c = init;
  CHECK(train(c, data, cfg, sched).iters == 9);
}

TEST_CASE("training reports divergence with the iteration index") {
  Rng rng(13);
  Tensor data = rng.normal_tensor({64, 2});
  auto m = DenoiserModel::init(Variant::vanilla, {2}, 1.0, nullptr, rng, 8, 2);
  NoiseSchedule sched;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch = 32;
  cfg.lr = 1e200;  // one step puts the weights beyond overflow under squaring
  cfg.seed = 1;
  try {
    train(m, data, cfg, sched);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("trained denoiser approaches the Gaussian posterior mean") {
  // x0 ~ N(m0, s0^2 I): the Bayes-optimal denoiser is
  // (s0^2 x + sigma^2 m0) / (s0^2 + sigma^2).
  const double s0 = 0.6;
  const double m0[2] = {0.5, -0.3};
  Rng rng(17);
  Tensor data({4096, 2});
  for (std::size_t i = 0; i < data.rows(); i++)
    for (std::size_t j = 0; j < 2; j++)
      data.at2(i, j) = m0[j] + s0 * rng.normal();

  NoiseSchedule sched;
  sched.sigma_data = 0.7;
  auto model = DenoiserModel::init(Variant::vanilla, {2}, 0.7, nullptr, rng, 32, 2);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch = 64;
  cfg.lr = 1e-3;
  cfg.seed = 3;
  cfg.noise = {-0.7, 0.9, -4.0};
  TrainStats stats = train(model, data, cfg, sched);
  CHECK(stats.iters == 6400);

  for (double sigma : {0.3, 1.0}) {
    double worst = 0, mean_err = 0;
    const std::size_t probes = 200;
    Tensor xt({probes, 2});
    for (std::size_t i = 0; i < probes; i++)
      for (std::size_t j = 0; j < 2; j++)
        xt.at2(i, j) = m0[j] + s0 * rng.normal() + sigma * rng.normal();
    Tensor d = model.denoise(xt, sigma);
    for (std::size_t i = 0; i < probes; i++)
      for (std::size_t j = 0; j < 2; j++) {
        double star = (s0 * s0 * xt.at2(i, j) + sigma * sigma * m0[j]) /
                      (s0 * s0 + sigma * sigma);
        double err = std::abs(d.at2(i, j) - star);
        worst = std::max(worst, err);
        mean_err += err;
      }
    mean_err /= double(2 * probes);
    INFO("sigma ", sigma, " mean_err ", mean_err, " worst ", worst);
    CHECK(mean_err < 0.04);
    CHECK(worst < 0.2);
  }
}
