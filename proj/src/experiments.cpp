#include "scdiff/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <stdexcept>

#include "scdiff/metrics.hpp"
#include "scdiff/oracle.hpp"
#include "scdiff/svg.hpp"

namespace scdiff {
namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;

std::string slug(std::string s) {
  for (char& ch : s) {
    if (ch == ':' || ch == '/') ch = '-';
    if (ch == '.') ch = 'p';
  }
  return s;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_run_dirs(const std::string& out) {
  for (const char* d : {"results", "plots", "artifacts", "traces"})
    fs::create_directories(fs::path(out) / d);
}

void status(const std::string& kind, const std::string& msg) {
  std::printf("[%s] %s\n", kind.c_str(), msg.c_str());
  std::fflush(stdout);
}

Tensor rows_range(const Tensor& t, std::size_t lo, std::size_t hi) {
  if (t.rank() != 2 || hi > t.rows() || lo >= hi)
    throw std::invalid_argument("rows_range: bad slice");
  std::size_t w = t.cols();
  Tensor out({hi - lo, w});
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(lo * w),
            t.data.begin() + static_cast<std::ptrdiff_t>(hi * w), out.data.begin());
  return out;
}

// Draws rows without replacement from a fixed pool.
BatchSampler pool_sampler(Tensor pool) {
  auto p = std::make_shared<Tensor>(std::move(pool));
  return [p](std::size_t n, Rng& rng) {
    auto idx = rng.sample_without_replacement(p->rows(), n);
    std::size_t w = p->cols();
    Tensor out({n, w});
    for (std::size_t i = 0; i < n; i++)
      for (std::size_t j = 0; j < w; j++) out.at2(i, j) = p->at2(idx[i], j);
    return out;
  };
}

TrainConfig train_config_from(const Config& c, TrainConfig base) {
  base.epochs = c.get_count("train.epochs", base.epochs);
  base.max_iters = c.get_count("train.max_iters", base.max_iters);
  base.batch = c.get_count("train.batch", base.batch);
  base.lr = c.get_num("train.lr", base.lr);
  base.ema_decay = c.get_num("train.ema_decay", base.ema_decay);
  base.clip_norm = c.get_num("train.clip_norm", base.clip_norm);
  base.pidm_lambda = c.get_num("train.pidm_lambda", base.pidm_lambda);
  base.log_every = c.get_count("train.log_every", base.log_every);
  base.noise.mu = c.get_num("noise.mu", base.noise.mu);
  base.noise.s = c.get_num("noise.s", base.noise.s);
  base.noise.ln_min = c.get_num("noise.ln_min", base.noise.ln_min);
  return base;
}

NoiseSchedule sched_from(const Config& c) {
  NoiseSchedule s;
  s.sigma_min = c.get_num("schedule.sigma_min", s.sigma_min);
  s.sigma_max = c.get_num("schedule.sigma_max", s.sigma_max);
  s.rho = c.get_num("schedule.rho", s.rho);
  s.sigma_data = 1.0;  // models operate in normalized space
  return s;
}

Dataset dataset_cached(const std::string& path, const std::string& kind,
                       const std::function<Dataset()>& gen) {
  if (fs::exists(path)) {
    status(kind, "reusing dataset " + path);
    return load_dataset(path);
  }
  Dataset ds = gen();
  save_dataset(path, ds);
  return ds;
}

void write_trace(const std::string& path, const RunManifest& man,
                 const TrainStats& stats) {
  if (path.empty() || fs::exists(path)) return;
  std::vector<std::vector<std::string>> rows;
  rows.reserve(stats.trace.size());
  for (const TracePoint& p : stats.trace)
    rows.push_back({std::to_string(p.iter), format_double(p.loss),
                    format_double(p.wall_ms)});
  write_csv(path, man, {"iter", "loss", "wall_ms"}, rows);
}

Dataset make_circle_dataset(const std::string& label, std::size_t n, Rng& rng) {
  if (label == "unit") return sample_unit_circle(n, rng);
  if (label == "dent") return sample_dent(n, rng);
  if (label.rfind("chop:", 0) == 0) {
    double alpha = std::stod(label.substr(5));
    return sample_chop(n, alpha, rng);
  }
  throw std::runtime_error("unknown circle dataset '" + label + "'");
}

std::vector<std::string> circle_labels(const Config& c) {
  auto names = c.get_names("experiment.datasets", {"unit", "dent", "chop"});
  auto alphas = c.get_list(
      "experiment.chop_alphas",
      {0.0, kPi / 8.0, kPi / 4.0, 3.0 * kPi / 8.0, kPi / 2.0});
  std::vector<std::string> labels;
  for (const std::string& name : names) {
    if (name == "chop") {
      for (double a : alphas) labels.push_back("chop:" + format_double(a));
    } else if (name == "unit" || name == "dent") {
      labels.push_back(name);
    } else {
      throw std::runtime_error("unknown circle dataset '" + name + "'");
    }
  }
  return labels;
}

Tensor sample_channel(const Tensor& samples, std::size_t row, std::size_t channel,
                      std::size_t n) {
  std::size_t nn = n * n;
  std::vector<double> d(samples.data.begin() +
                            static_cast<std::ptrdiff_t>(row * samples.cols() + channel * nn),
                        samples.data.begin() +
                            static_cast<std::ptrdiff_t>(row * samples.cols() + (channel + 1) * nn));
  return Tensor({n, n}, std::move(d));
}

}  // namespace

ExperimentConfig ExperimentConfig::make(const Config& raw, uint64_t seed,
                                        const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.kind = raw.get_str("experiment.kind", "");
  if (cfg.kind != "circles" && cfg.kind != "darcy" && cfg.kind != "helmholtz" &&
      cfg.kind != "props")
    throw std::runtime_error(
        "experiment.kind must be one of circles, darcy, helmholtz, props");
  cfg.raw = raw;
  cfg.seed = seed;
  if (out_dir.empty()) throw std::runtime_error("output directory required");
  cfg.out_dir = out_dir;
  return cfg;
}

uint64_t cell_seed(uint64_t seed, const std::string& name) {
  return splitmix64(splitmix64(seed) ^ fnv1a64(name));
}

Rng cell_rng(uint64_t seed, const std::string& name) {
  return Rng(cell_seed(seed, name));
}

DenoiserModel train_or_load(const std::string& ckpt_path, const Dataset& ds,
                            const TrainSpec& spec, const NoiseSchedule& sched,
                            const RunManifest& manifest,
                            const std::string& trace_csv) {
  if (fs::exists(ckpt_path)) return load_checkpoint(ckpt_path, spec.model_field);
  Rng init_rng(spec.init_seed);
  DenoiserModel model =
      DenoiserModel::init(spec.variant, ds.sample_shape, sched.sigma_data,
                          spec.model_field, init_rng, spec.hidden, spec.depth);
  model.channel_mean = ds.channel_mean;
  model.channel_std = ds.channel_std;
  TrainStats stats = train(model, ds.normalized(), spec.train, sched,
                           spec.penalty_field);
  save_checkpoint(ckpt_path, model);
  write_trace(trace_csv, manifest, stats);
  return model;
}

Tensor sample_in_chunks(const ScoreFn& score, const NoiseSchedule& sched,
                        std::size_t n_steps, std::size_t n, std::size_t dim,
                        std::size_t chunk, uint64_t seed,
                        const std::string& name) {
  if (n == 0) throw std::invalid_argument("sample_in_chunks: n must be positive");
  if (chunk == 0 || chunk > n) chunk = n;
  Tensor out({n, dim});
  std::size_t done = 0, part = 0;
  while (done < n) {
    std::size_t b = std::min(chunk, n - done);
    Rng rng = cell_rng(seed, name + "/chunk" + std::to_string(part));
    Tensor x = heun_sample(score, sched, n_steps, b, dim, rng);
    std::copy(x.data.begin(), x.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(done * dim));
    done += b;
    ++part;
  }
  return out;
}

RunResult run_circles(const ExperimentConfig& cfg) {
  if (cfg.kind != "circles")
    throw std::runtime_error("run_circles: experiment.kind must be circles");
  const Config& c = cfg.raw;
  const RunManifest man = cfg.manifest();
  const std::string canonical = c.canonical();
  ensure_run_dirs(cfg.out_dir);
  const std::string results = join(cfg.out_dir, "results");
  const std::string plots = join(cfg.out_dir, "plots");
  const std::string artifacts = join(cfg.out_dir, "artifacts");
  const std::string traces = join(cfg.out_dir, "traces");

  std::size_t n_train = c.get_count("data.n_train", 10000);
  double strength = c.get_num("data.constraint_c", 1.0);
  auto labels = circle_labels(c);
  auto variants = c.get_names("experiment.variants", {"vanilla", "pidm", "scd"});
  double guidance_scale = c.get_num("experiment.guidance_scale", 0.03);
  std::size_t lgd_m = c.get_count("experiment.lgd_m", 16);
  std::size_t hidden = c.get_count("model.hidden", 128);
  std::size_t depth = c.get_count("model.depth", 3);
  TrainConfig tc = train_config_from(c, TrainConfig{});
  NoiseSchedule sched = sched_from(c);
  std::size_t n_steps = c.get_count("sample.n_steps", 50);
  std::size_t n_samples = c.get_count("sample.n_samples", 100000);
  std::size_t chunk = c.get_count("sample.chunk", 20000);
  std::size_t n_estimates = c.get_count("eval.n_estimates", 100);
  std::size_t n_per = c.get_count("eval.n_per", 1000);
  std::size_t n_reference = c.get_count("eval.n_reference", 100000);

  auto raw_field = std::make_shared<CircleField>(strength);
  std::vector<std::vector<std::string>> rows;
  RunResult out;

  for (const std::string& label : labels) {
    status(cfg.kind, label + ": preparing data");
    Dataset ds = dataset_cached(
        join(artifacts, "data_" + slug(label) + ".scdf"), cfg.kind, [&] {
          Rng r = cell_rng(cfg.seed, "data/" + label);
          return make_circle_dataset(label, n_train, r);
        });
    Rng ref_rng = cell_rng(cfg.seed, "ref/" + label);
    Tensor reference = make_circle_dataset(label, n_reference, ref_rng).samples;
    Rng floor_rng = cell_rng(cfg.seed, "floor/" + label);
    Tensor floor_pool = make_circle_dataset(label, n_reference, floor_rng).samples;
    Rng floor_eval = cell_rng(cfg.seed, "eval/floor/" + label);
    MetricReport floor = w1_protocol(pool_sampler(std::move(floor_pool)), reference,
                                     n_estimates, n_per, floor_eval, canonical);

    auto norm_field = std::make_shared<NormalizedField>(raw_field, ds.channel_mean,
                                                        ds.channel_std);
    std::string data_svg = join(plots, "data_" + slug(label) + ".svg");
    if (!fs::exists(data_svg)) {
      plot_scatter(ds.samples, data_svg, man);
      out.outputs.push_back(data_svg);
    }

    auto make_spec = [&](const std::string& vname) {
      TrainSpec spec;
      spec.variant = variant_from_name(vname);
      spec.hidden = hidden;
      spec.depth = depth;
      spec.train = tc;
      spec.train.seed = cell_seed(cfg.seed, "train/" + label + "/" + vname);
      spec.init_seed = cell_seed(cfg.seed, "init/" + label + "/" + vname);
      if (spec.variant == Variant::scd) spec.model_field = norm_field;
      if (spec.variant == Variant::pidm) spec.penalty_field = norm_field.get();
      return spec;
    };

    for (const std::string& variant : variants) {
      std::string cell = label + "/" + variant;
      status(cfg.kind, cell + ": training");
      ScoreFn score;
      if (variant == "guided") {
        DenoiserModel base = train_or_load(
            join(artifacts, "ckpt_" + slug(label) + "_vanilla.scdf"), ds,
            make_spec("vanilla"), sched, man,
            join(traces, "train_" + slug(label) + "_vanilla.csv"));
        score = lgd_guided_score(base, norm_field, lgd_m,
                                 cell_seed(cfg.seed, "lgd/" + cell),
                                 guidance_scale);
      } else {
        DenoiserModel model = train_or_load(
            join(artifacts, "ckpt_" + slug(label) + "_" + variant + ".scdf"), ds,
            make_spec(variant), sched, man,
            join(traces, "train_" + slug(label) + "_" + variant + ".csv"));
        score = model_score(model);
      }
      status(cfg.kind, cell + ": sampling " + std::to_string(n_samples));
      Tensor samples_norm = sample_in_chunks(score, sched, n_steps, n_samples,
                                             ds.dim(), chunk, cfg.seed,
                                             "sample/" + cell);
      Tensor samples = ds.denormalize(samples_norm);
      status(cfg.kind, cell + ": scoring");
      Rng eval_rng = cell_rng(cfg.seed, "eval/w1/" + cell);
      MetricReport w1 = w1_protocol(pool_sampler(samples), reference, n_estimates,
                                    n_per, eval_rng, canonical);
      MetricReport res = residual_stats(samples, *raw_field, canonical);
      std::string svg =
          join(plots, "samples_" + slug(label) + "_" + slug(variant) + ".svg");
      if (!fs::exists(svg)) {
        plot_scatter(samples, svg, man);
        out.outputs.push_back(svg);
      }
      rows.push_back({label, variant, format_double(w1.mean),
                      format_double(w1.half_width), format_double(floor.mean),
                      format_double(res.mean), format_double(res.half_width),
                      std::to_string(n_estimates), std::to_string(n_per)});
    }
  }

  std::string csv = join(results, "circles.csv");
  write_csv(csv, man,
            {"dataset", "variant", "w1_mean", "w1_half_width", "w1_floor",
             "res_mean", "res_half_width", "n_estimates", "n_per"},
            rows);
  out.outputs.push_back(csv);
  status(cfg.kind, "wrote " + csv);
  return out;
}

RunResult run_pde(const ExperimentConfig& cfg) {
  if (cfg.kind != "darcy" && cfg.kind != "helmholtz")
    throw std::runtime_error("run_pde: experiment.kind must be darcy or helmholtz");
  const bool darcy = cfg.kind == "darcy";
  const Config& c = cfg.raw;
  const RunManifest man = cfg.manifest();
  const std::string canonical = c.canonical();
  ensure_run_dirs(cfg.out_dir);
  const std::string results = join(cfg.out_dir, "results");
  const std::string plots = join(cfg.out_dir, "plots");
  const std::string artifacts = join(cfg.out_dir, "artifacts");
  const std::string traces = join(cfg.out_dir, "traces");

  std::size_t n_train = c.get_count("data.n_train", 1024);
  std::size_t n_val = c.get_count("data.n_val", 128);
  GridSpec grid{c.get_count("data.grid_n", 32)};
  double f_max = c.get_num("data.f_max", 10.0);
  double k = c.get_num("data.k", 1.0);
  double length_scale = c.get_num("data.length_scale", 0.2);
  auto levels = c.get_list("experiment.levels",
                           darcy ? std::vector<double>{10, 20, 30, 40}
                                 : std::vector<double>{0, 0.05, 0.1, 0.5});
  auto variants = c.get_names("experiment.variants",
                              {"vanilla", "guided", "pidm", "scd"});
  double guidance_scale = c.get_num("experiment.guidance_scale", 0.03);
  std::size_t lgd_m = c.get_count("experiment.lgd_m", 16);
  std::size_t hidden = c.get_count("model.hidden", 128);
  std::size_t depth = c.get_count("model.depth", 3);

  TrainConfig tc;
  tc.batch = 64;
  tc.lr = 2e-3;
  tc.max_iters = 20000;
  tc = train_config_from(c, tc);
  if (!c.has("train.epochs") && tc.max_iters > 0) tc.epochs = tc.max_iters;

  NoiseSchedule sched = sched_from(c);
  std::size_t n_steps = c.get_count("sample.n_steps", 100);
  std::size_t n_samples = c.get_count("sample.n_samples", 1000);
  std::size_t chunk = c.get_count("sample.chunk", 250);
  NllConfig nll;
  nll.n_steps = c.get_count("eval.nll_steps", 100);
  nll.mode = DivergenceMode::rademacher;
  nll.probes = c.get_count("eval.nll_probes", 8);
  nll.fd_eps = c.get_num("eval.nll_fd_eps", 1e-4);
  std::size_t nll_rows = std::min(c.get_count("eval.nll_rows", 128), n_val);

  status(cfg.kind, "preparing dataset");
  Dataset full = dataset_cached(
      join(artifacts, "data_" + cfg.kind + ".scdf"), cfg.kind, [&] {
        Rng r = cell_rng(cfg.seed, "data/" + cfg.kind);
        return darcy ? gen_darcy_dataset(n_train + n_val, grid,
                                         DarcySource::make(grid, f_max),
                                         length_scale, r)
                     : gen_helmholtz_dataset(n_train + n_val, grid, k, r);
      });
  if (full.size() != n_train + n_val)
    throw std::runtime_error("dataset artifact does not match configured sizes");
  Dataset train_ds = full;
  train_ds.samples = rows_range(full.samples, 0, n_train);
  Tensor val_raw = rows_range(full.samples, n_train, n_train + n_val);
  Tensor val_nll = rows_range(full.normalize_rows(val_raw), 0, nll_rows);

  std::shared_ptr<const ConstraintField> true_field;
  if (darcy)
    true_field = std::make_shared<DarcyField>(grid, DarcySource::make(grid, f_max));
  else
    true_field = std::make_shared<HelmholtzField>(grid, k);
  const char* ch0 = darcy ? "K" : "u";
  const char* ch1 = darcy ? "p" : "a";

  for (std::size_t ch = 0; ch < 2; ch++) {
    std::string p = join(plots, std::string("data_") + (ch == 0 ? ch0 : ch1) + ".svg");
    if (!fs::exists(p)) plot_field(sample_channel(val_raw, 0, ch, grid.n), p, man);
  }

  // one misspecified constraint per level, shared by every variant at that level
  std::vector<std::shared_ptr<const ConstraintField>> level_fields;
  std::vector<double> level_params;
  for (double lvl : levels) {
    if (darcy) {
      auto f = std::make_shared<DarcyField>(
          misspecify_darcy(static_cast<const DarcyField&>(*true_field), lvl));
      level_params.push_back(f->source().f_max);
      level_fields.push_back(std::move(f));
    } else {
      Rng mr = cell_rng(cfg.seed, "misspec/" + format_double(lvl));
      auto f = std::make_shared<HelmholtzField>(misspecify_helmholtz(
          static_cast<const HelmholtzField&>(*true_field), lvl, mr));
      level_params.push_back(f->wavenumber());
      level_fields.push_back(std::move(f));
    }
  }

  struct CellScores {
    MetricReport res, nll;
  };
  auto evaluate = [&](const ScoreFn& score, const DenoiserOps* ops,
                      const std::string& cell) {
    status(cfg.kind, cell + ": sampling " + std::to_string(n_samples));
    Tensor samples_norm = sample_in_chunks(score, sched, n_steps, n_samples,
                                           full.dim(), chunk, cfg.seed,
                                           "sample/" + cell);
    Tensor samples = full.denormalize(samples_norm);
    CellScores s;
    s.res = residual_stats(samples, *true_field, canonical);
    status(cfg.kind, cell + ": likelihood on " + std::to_string(nll_rows) +
                         " validation rows");
    NllConfig ncfg = nll;
    ncfg.seed = cell_seed(cfg.seed, "nll/" + cell);
    if (!ops) ncfg.mode = DivergenceMode::finite_difference;
    std::vector<double> bits = ops ? nll_bits_per_dim(*ops, sched, val_nll, ncfg)
                                   : nll_bits_per_dim(score, sched, val_nll, ncfg);
    s.nll = report_from_estimates("nll_bits_per_dim", bits, 1, canonical);
    for (std::size_t ch = 0; ch < 2; ch++) {
      std::string p = join(plots, "sample_" + slug(cell) + "_" +
                                      (ch == 0 ? ch0 : ch1) + ".svg");
      if (!fs::exists(p))
        plot_field(sample_channel(samples, 0, ch, grid.n), p, man);
    }
    return s;
  };

  auto make_spec = [&](Variant v, const std::string& cell,
                       std::shared_ptr<const ConstraintField> norm_field) {
    TrainSpec spec;
    spec.variant = v;
    spec.hidden = hidden;
    spec.depth = depth;
    spec.train = tc;
    spec.train.seed = cell_seed(cfg.seed, "train/" + cell);
    spec.init_seed = cell_seed(cfg.seed, "init/" + cell);
    if (v == Variant::scd) spec.model_field = std::move(norm_field);
    return spec;
  };

  bool want_vanilla = false;
  for (const std::string& v : variants)
    if (v == "vanilla" || v == "guided") want_vanilla = true;
  DenoiserModel vanilla_model;
  DenoiserOps vanilla_ops;
  CellScores vanilla_scores;
  if (want_vanilla) {
    std::string cell = cfg.kind + "/vanilla";
    status(cfg.kind, cell + ": training");
    vanilla_model = train_or_load(join(artifacts, "ckpt_vanilla.scdf"), train_ds,
                                  make_spec(Variant::vanilla, cell, nullptr),
                                  sched, man, join(traces, "train_vanilla.csv"));
    vanilla_ops = ops_of(vanilla_model);
    vanilla_scores = evaluate(model_score(vanilla_model), &vanilla_ops, cell);
  }

  std::vector<std::vector<std::string>> rows;
  RunResult out;
  for (std::size_t li = 0; li < levels.size(); li++) {
    std::string lvl = format_double(levels[li]);
    auto norm_field = std::make_shared<NormalizedField>(
        level_fields[li], full.channel_mean, full.channel_std);
    for (const std::string& variant : variants) {
      std::string cell = cfg.kind + "/" + lvl + "/" + variant;
      CellScores s;
      if (variant == "vanilla") {
        s = vanilla_scores;  // constraint-blind, identical across levels
      } else if (variant == "guided") {
        ScoreFn score = lgd_guided_score(vanilla_model, norm_field, lgd_m,
                                         cell_seed(cfg.seed, "lgd/" + cell),
                                         guidance_scale);
        s = evaluate(score, nullptr, cell);
      } else {
        Variant v = variant_from_name(variant);
        TrainSpec spec = make_spec(v, cell, norm_field);
        if (v == Variant::pidm) spec.penalty_field = norm_field.get();
        status(cfg.kind, cell + ": training");
        DenoiserModel model = train_or_load(
            join(artifacts, "ckpt_" + slug(lvl) + "_" + variant + ".scdf"),
            train_ds, spec, sched, man,
            join(traces, "train_" + slug(lvl) + "_" + variant + ".csv"));
        DenoiserOps ops = ops_of(model);
        s = evaluate(model_score(model), &ops, cell);
      }
      rows.push_back({lvl, format_double(level_params[li]), variant,
                      format_double(s.res.mean), format_double(s.res.half_width),
                      format_double(s.nll.mean), format_double(s.nll.half_width),
                      std::to_string(n_samples), std::to_string(nll_rows)});
    }
  }

  std::string csv = join(results, cfg.kind + ".csv");
  write_csv(csv, man,
            {"level", "constraint_param", "variant", "res_mean", "res_half_width",
             "nll_mean", "nll_half_width", "n_samples", "n_val_rows"},
            rows);
  out.outputs.push_back(csv);
  status(cfg.kind, "wrote " + csv);
  return out;
}

RunResult run_props(const ExperimentConfig& cfg) {
  if (cfg.kind != "props")
    throw std::runtime_error("run_props: experiment.kind must be props");
  const Config& c = cfg.raw;
  const RunManifest man = cfg.manifest();
  ensure_run_dirs(cfg.out_dir);

  auto lambdas = c.get_list("props.lambdas", {0.0, 0.1, 1.0, 10.0});
  auto sigmas = c.get_list("props.sigmas", {0.1, 1.0});
  std::size_t train_iters = c.get_count("props.train_iters", 30000);
  std::size_t n_pairs = c.get_count("props.n_pairs", 1000000);
  auto m0 = c.get_list("props.m0", {0.4, -0.2});
  double s0 = c.get_num("props.s0", 0.8);
  auto a = c.get_list("props.a", {2.0, 1.0});
  double b = c.get_num("props.b", 0.3);
  double max_deviation = c.get_num("props.max_deviation", 0.05);
  double max_ratio_err = c.get_num("props.max_ratio_err", 0.02);

  double norm = 0;
  for (double v : a) norm += v * v;
  norm = std::sqrt(norm);
  if (norm <= 0) throw std::runtime_error("props.a must be nonzero");
  for (double& v : a) v /= norm;

  GaussianLinearSetup setup;
  setup.m0 = Tensor({m0.size()}, m0);
  setup.s0 = s0;
  setup.a = Tensor({a.size()}, a);
  setup.b = b;

  std::vector<std::vector<std::string>> rows;
  bool ok = true;
  for (double lambda : lambdas) {
    for (double sigma : sigmas) {
      setup.lambda = lambda;
      setup.sigma = sigma;
      setup.validate();
      std::string cell = format_double(lambda) + "/" + format_double(sigma);
      status(cfg.kind, "lambda=" + format_double(lambda) +
                           " sigma=" + format_double(sigma));
      Rng r1 = cell_rng(cfg.seed, "prop1/" + cell);
      Prop1Report p1 = verify_prop1(setup, train_iters, r1);
      Rng r2 = cell_rng(cfg.seed, "prop2/" + cell);
      Prop2Report p2 = verify_prop2(setup, n_pairs, r2);
      bool cell_ok = p1.max_rel_deviation <= max_deviation;
      if (lambda == 0.0)
        cell_ok = cell_ok && p2.mse_gap == 0.0 && p2.ratio == 1.0;
      else
        cell_ok = cell_ok && std::abs(p2.ratio - 1.0) <= max_ratio_err;
      ok = ok && cell_ok;
      status(cfg.kind, std::string(cell_ok ? "  ok" : "  VIOLATION") +
                           ": deviation=" + format_double(p1.max_rel_deviation) +
                           " gap_ratio=" + format_double(p2.ratio));
      rows.push_back({format_double(lambda), format_double(sigma),
                      format_double(p1.max_rel_deviation),
                      format_double(p2.ratio)});
    }
  }

  std::string csv = join(join(cfg.out_dir, "results"), "props.csv");
  write_csv(csv, man, {"lambda", "sigma", "deviation", "gap_ratio"}, rows);
  status(cfg.kind, "wrote " + csv);
  RunResult out;
  out.outputs.push_back(csv);
  out.acceptance_ok = ok;
  return out;
}

}  // namespace scdiff
