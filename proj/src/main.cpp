#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "scdiff/experiments.hpp"
#include "scdiff/metrics.hpp"
#include "scdiff/version.hpp"

namespace {

using namespace scdiff;

std::shared_ptr<const ConstraintField> make_raw_field(
    const std::string& kind, const std::vector<std::size_t>& sample_shape,
    double c, double f_max, double k) {
  if (kind == "circle") return std::make_shared<CircleField>(c);
  if (sample_shape.size() != 3 || sample_shape[0] != 2)
    throw std::runtime_error("grid constraints need (2, n, n) samples");
  GridSpec grid{sample_shape[1]};
  if (kind == "darcy")
    return std::make_shared<DarcyField>(grid, DarcySource::make(grid, f_max));
  if (kind == "helmholtz") return std::make_shared<HelmholtzField>(grid, k);
  throw std::runtime_error("unknown constraint '" + kind + "'");
}

RunManifest flags_manifest(const std::map<std::string, std::string>& flags,
                           uint64_t seed) {
  Config cfg;
  cfg.values = flags;
  return make_manifest(cfg.canonical(), seed);
}

struct ConstraintFlags {
  std::string kind;  // empty = none
  double c = 1.0;
  double f_max = 10.0;
  double k = 1.0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--constraint", kind,
                    "constraint field: circle, darcy or helmholtz");
    cmd->add_option("--constraint-c", c, "circle residual strength");
    cmd->add_option("--constraint-f-max", f_max, "darcy constraint source amplitude");
    cmd->add_option("--constraint-k", k, "helmholtz constraint wavenumber");
  }
  std::shared_ptr<const ConstraintField> build(
      const std::vector<std::size_t>& sample_shape) const {
    if (kind.empty()) return nullptr;
    return make_raw_field(kind, sample_shape, c, f_max, k);
  }
  void record(std::map<std::string, std::string>& m) const {
    if (kind.empty()) return;
    m["constraint.kind"] = kind;
    m["constraint.c"] = format_double(c);
    m["constraint.f_max"] = format_double(f_max);
    m["constraint.k"] = format_double(k);
  }
};

int do_gen_data(const std::string& kind, std::size_t n, double alpha,
                std::size_t grid_n, double f_max, double k, double length_scale,
                uint64_t seed, const std::string& out) {
  Rng rng(seed);
  Dataset ds;
  if (kind == "unit-circle") ds = sample_unit_circle(n, rng);
  else if (kind == "dent") ds = sample_dent(n, rng);
  else if (kind == "chop") ds = sample_chop(n, alpha, rng);
  else if (kind == "darcy")
    ds = gen_darcy_dataset(n, GridSpec{grid_n}, DarcySource::make(GridSpec{grid_n}, f_max),
                           length_scale, rng);
  else if (kind == "helmholtz") ds = gen_helmholtz_dataset(n, GridSpec{grid_n}, k, rng);
  else throw std::runtime_error("unknown dataset kind '" + kind + "'");
  ds.manifest["seed"] = seed;
  save_dataset(out, ds);
  std::printf("wrote %s: %zu samples of %s\n", out.c_str(), ds.size(),
              ds.descriptor.c_str());
  return 0;
}

int do_train(const std::string& dataset, const std::string& variant_name,
             const ConstraintFlags& cf, TrainConfig tc, NoiseSchedule sched,
             std::size_t hidden, std::size_t depth, uint64_t seed,
             const std::string& trace, const std::string& out) {
  Dataset ds = load_dataset(dataset);
  Variant variant = variant_from_name(variant_name);
  auto raw_field = cf.build(ds.sample_shape);
  std::shared_ptr<const ConstraintField> norm_field;
  if (raw_field)
    norm_field = std::make_shared<NormalizedField>(raw_field, ds.channel_mean,
                                                   ds.channel_std);
  if ((variant == Variant::scd || (variant == Variant::pidm && tc.pidm_lambda > 0)) &&
      !norm_field)
    throw std::runtime_error("variant '" + variant_name + "' needs --constraint");

  std::map<std::string, std::string> flags{
      {"train.dataset", ds.descriptor},
      {"train.variant", variant_name},
      {"train.epochs", std::to_string(tc.epochs)},
      {"train.max_iters", std::to_string(tc.max_iters)},
      {"train.batch", std::to_string(tc.batch)},
      {"train.lr", format_double(tc.lr)},
      {"train.pidm_lambda", format_double(tc.pidm_lambda)},
      {"model.hidden", std::to_string(hidden)},
      {"model.depth", std::to_string(depth)}};
  cf.record(flags);
  RunManifest man = flags_manifest(flags, seed);

  TrainSpec spec;
  spec.variant = variant;
  spec.model_field = variant == Variant::scd ? norm_field : nullptr;
  spec.penalty_field = variant == Variant::pidm ? norm_field.get() : nullptr;
  spec.train = tc;
  spec.train.seed = cell_seed(seed, "cli/train");
  spec.hidden = hidden;
  spec.depth = depth;
  spec.init_seed = cell_seed(seed, "cli/init");
  if (std::filesystem::exists(out))
    throw std::runtime_error("refusing to overwrite existing output: " + out);
  DenoiserModel model = train_or_load(out, ds, spec, sched, man, trace);
  std::printf("wrote %s: %s denoiser, %zu parameter tensors\n", out.c_str(),
              variant_name.c_str(), model.params.size());
  return 0;
}

int do_sample(const std::string& checkpoint, std::size_t n, std::size_t steps,
              std::size_t chunk, const std::string& guidance, double scale,
              std::size_t m_samples, const ConstraintFlags& cf,
              NoiseSchedule sched, uint64_t seed, const std::string& out) {
  DenoiserModel probe = load_checkpoint(checkpoint);
  auto raw_field = cf.build(probe.sample_shape);
  std::shared_ptr<const ConstraintField> norm_field;
  if (raw_field)
    norm_field = std::make_shared<NormalizedField>(raw_field, probe.channel_mean,
                                                   probe.channel_std);
  DenoiserModel model = load_checkpoint(checkpoint, norm_field);
  if (!model.constraint_descriptor.empty() && norm_field &&
      model.constraint_descriptor != norm_field->descriptor())
    std::fprintf(stderr, "warning: checkpoint trained against %s, sampling with %s\n",
                 model.constraint_descriptor.c_str(),
                 norm_field->descriptor().c_str());

  ScoreFn score;
  if (guidance == "none") {
    score = model_score(model);
  } else if (guidance == "dps") {
    score = dps_guided_score(model, norm_field, scale);
  } else if (guidance == "lgd") {
    score = lgd_guided_score(model, norm_field, m_samples,
                             cell_seed(seed, "cli/lgd"), scale);
  } else {
    throw std::runtime_error("unknown guidance '" + guidance + "'");
  }

  std::map<std::string, std::string> flags{
      {"sample.checkpoint", checkpoint},
      {"sample.n", std::to_string(n)},
      {"sample.steps", std::to_string(steps)},
      {"sample.guidance", guidance},
      {"sample.scale", format_double(scale)},
      {"sample.m", std::to_string(m_samples)}};
  cf.record(flags);
  RunManifest man = flags_manifest(flags, seed);

  Tensor samples_norm =
      sample_in_chunks(score, sched, steps, n, model.dim(), chunk, seed, "cli/sample");
  Tensor samples = samples_norm;
  // denormalize per channel into raw data space
  {
    std::size_t chdim = model.dim() / model.channels();
    for (std::size_t r = 0; r < n; r++)
      for (std::size_t jj = 0; jj < model.dim(); jj++) {
        std::size_t ch = jj / chdim;
        samples.at2(r, jj) =
            model.channel_mean[ch] + model.channel_std[ch] * samples_norm.at2(r, jj);
      }
  }

  Container cont;
  cont.meta = Json{{"kind", "samples"},
                   {"toolkit", kVersion},
                   {"space", "raw"},
                   {"sample_shape", model.sample_shape},
                   {"manifest", man.to_json()}};
  cont.tensors.emplace_back("samples", samples);
  if (std::filesystem::exists(out))
    throw std::runtime_error("refusing to overwrite existing output: " + out);
  write_container(out, cont);
  std::printf("wrote %s: %zu samples\n", out.c_str(), n);
  return 0;
}

int do_eval(const std::string& samples_path, const std::string& reference_path,
            std::size_t n_estimates, std::size_t n_per, const ConstraintFlags& cf,
            uint64_t seed, const std::string& out) {
  Container cont = read_container(samples_path);
  if (cont.meta.value("kind", "") != "samples")
    throw std::runtime_error("not a samples container: " + samples_path);
  const Tensor& samples = cont.tensor("samples");

  std::map<std::string, std::string> flags{{"eval.samples", samples_path},
                                           {"eval.n_estimates", std::to_string(n_estimates)},
                                           {"eval.n_per", std::to_string(n_per)}};
  cf.record(flags);
  if (!reference_path.empty()) flags["eval.reference"] = reference_path;
  RunManifest man = flags_manifest(flags, seed);
  Config hash_cfg;
  hash_cfg.values = flags;
  std::string canonical = hash_cfg.canonical();

  std::vector<std::vector<std::string>> rows;
  if (!reference_path.empty()) {
    Dataset ref = load_dataset(reference_path);
    Rng rng(cell_seed(seed, "cli/eval/w1"));
    auto sampler = [&samples](std::size_t n, Rng& r) {
      auto idx = r.sample_without_replacement(samples.rows(), n);
      Tensor out({n, samples.cols()});
      for (std::size_t i = 0; i < n; i++)
        for (std::size_t j = 0; j < samples.cols(); j++)
          out.at2(i, j) = samples.at2(idx[i], j);
      return out;
    };
    MetricReport w1 = w1_protocol(sampler, ref.samples, n_estimates, n_per, rng,
                                  canonical);
    rows.push_back(w1.csv_row());
  }
  if (!cf.kind.empty()) {
    std::vector<std::size_t> shape =
        cont.meta.at("sample_shape").get<std::vector<std::size_t>>();
    auto field = cf.build(shape);
    MetricReport res = residual_stats(samples, *field, canonical);
    rows.push_back(res.csv_row());
  }
  if (rows.empty())
    throw std::runtime_error("nothing to evaluate: pass --reference or --constraint");
  write_csv(out, man, MetricReport::csv_header(), rows);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

// kind empty means "take it from the config" (pde subcommand default).
int run_experiment(std::string kind, const std::string& config_path,
                   const std::vector<std::string>& overrides, uint64_t seed,
                   const std::string& out_dir) {
  Config cfg;
  if (!config_path.empty()) cfg = Config::load(config_path);
  for (const std::string& kv : overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.values[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  auto it = cfg.values.find("experiment.kind");
  if (kind.empty()) kind = it != cfg.values.end() ? it->second : "darcy";
  if (it != cfg.values.end() && it->second != kind)
    throw std::runtime_error("config says experiment.kind = " + it->second +
                             " but the subcommand asked for " + kind);
  cfg.values["experiment.kind"] = kind;
  ExperimentConfig ecfg = ExperimentConfig::make(cfg, seed, out_dir);
  RunResult res;
  if (kind == "circles") res = run_circles(ecfg);
  else if (kind == "props") res = run_props(ecfg);
  else res = run_pde(ecfg);
  return res.acceptance_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion with softly constrained denoisers: training, sampling "
               "and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a dataset file");
  std::string gen_kind, gen_out;
  std::size_t gen_n = 10000, gen_grid = 32;
  double gen_alpha = 0.0, gen_fmax = 10.0, gen_k = 1.0, gen_ell = 0.2;
  uint64_t gen_seed = 0;
  gen->add_option("--kind", gen_kind,
                  "unit-circle, dent, chop, darcy or helmholtz")->required();
  gen->add_option("--n", gen_n, "number of samples")->required();
  gen->add_option("--alpha", gen_alpha, "chop angle in radians");
  gen->add_option("--grid-n", gen_grid, "grid points per side");
  gen->add_option("--f-max", gen_fmax, "darcy source amplitude");
  gen->add_option("--k", gen_k, "helmholtz wavenumber");
  gen->add_option("--length-scale", gen_ell, "random field length scale");
  gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a denoiser on a dataset");
  std::string tr_dataset, tr_variant, tr_trace, tr_out;
  ConstraintFlags tr_cf;
  TrainConfig tr_tc;
  NoiseSchedule tr_sched;
  std::size_t tr_hidden = 128, tr_depth = 3;
  uint64_t tr_seed = 0;
  tr->add_option("--dataset", tr_dataset, "training dataset file")->required();
  tr->add_option("--variant", tr_variant, "vanilla, pidm or scd")->required();
  tr_cf.add_to(tr);
  tr->add_option("--epochs", tr_tc.epochs, "training epochs");
  tr->add_option("--max-iters", tr_tc.max_iters, "iteration cap, 0 = none");
  tr->add_option("--batch", tr_tc.batch, "batch size");
  tr->add_option("--lr", tr_tc.lr, "Adam learning rate");
  tr->add_option("--pidm-lambda", tr_tc.pidm_lambda, "squared-residual weight");
  tr->add_option("--ema", tr_tc.ema_decay, "EMA decay");
  tr->add_option("--clip", tr_tc.clip_norm, "global gradient norm clip");
  tr->add_option("--noise-mu", tr_tc.noise.mu, "log noise mean");
  tr->add_option("--noise-s", tr_tc.noise.s, "log noise std");
  tr->add_option("--noise-ln-min", tr_tc.noise.ln_min, "log noise lower truncation");
  tr->add_option("--sigma-min", tr_sched.sigma_min, "schedule sigma_min");
  tr->add_option("--sigma-max", tr_sched.sigma_max, "schedule sigma_max");
  tr->add_option("--rho", tr_sched.rho, "schedule warp exponent");
  tr->add_option("--hidden", tr_hidden, "hidden width");
  tr->add_option("--depth", tr_depth, "hidden layers");
  tr->add_option("--trace", tr_trace, "training trace CSV path");
  tr->add_option("--seed", tr_seed, "master seed")->required();
  tr->add_option("--out", tr_out, "output checkpoint path")->required();

  // sample
  auto* sa = app.add_subcommand("sample", "sample a trained denoiser");
  std::string sa_ckpt, sa_guidance = "none", sa_out;
  ConstraintFlags sa_cf;
  NoiseSchedule sa_sched;
  std::size_t sa_n = 1000, sa_steps = 50, sa_chunk = 0, sa_m = 16;
  double sa_scale = 1.0;
  uint64_t sa_seed = 0;
  sa->add_option("--checkpoint", sa_ckpt, "checkpoint file")->required();
  sa->add_option("--n", sa_n, "number of samples")->required();
  sa->add_option("--steps", sa_steps, "probability-flow steps");
  sa->add_option("--chunk", sa_chunk, "sampling chunk rows, 0 = all at once");
  sa->add_option("--guidance", sa_guidance, "none, dps or lgd");
  sa->add_option("--scale", sa_scale, "guidance scale");
  sa->add_option("--m", sa_m, "posterior draws per guidance step");
  sa_cf.add_to(sa);
  sa->add_option("--sigma-min", sa_sched.sigma_min, "schedule sigma_min");
  sa->add_option("--sigma-max", sa_sched.sigma_max, "schedule sigma_max");
  sa->add_option("--rho", sa_sched.rho, "schedule warp exponent");
  sa->add_option("--seed", sa_seed, "master seed")->required();
  sa->add_option("--out", sa_out, "output samples container")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score a samples container");
  std::string ev_samples, ev_reference, ev_out;
  ConstraintFlags ev_cf;
  std::size_t ev_nest = 100, ev_nper = 1000;
  uint64_t ev_seed = 0;
  ev->add_option("--samples", ev_samples, "samples container")->required();
  ev->add_option("--reference", ev_reference, "reference dataset for Wasserstein-1");
  ev->add_option("--n-estimates", ev_nest, "Wasserstein-1 estimates");
  ev->add_option("--n-per", ev_nper, "points per estimate");
  ev_cf.add_to(ev);
  ev->add_option("--seed", ev_seed, "master seed")->required();
  ev->add_option("--out", ev_out, "output CSV path")->required();

  // experiment pipelines
  std::string ex_config, ex_out;
  std::vector<std::string> ex_sets;
  uint64_t ex_seed = 0;
  auto add_experiment = [&](const char* name, const char* desc) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--config", ex_config, "INI config file");
    cmd->add_option("--set", ex_sets, "override config entries, key=value");
    cmd->add_option("--seed", ex_seed, "master seed")->required();
    cmd->add_option("--out", ex_out, "run directory")->required();
    return cmd;
  };
  auto* ci = add_experiment("circles", "toy circle study with misspecified constraints");
  auto* pd = add_experiment("pde", "grid PDE study (darcy or helmholtz)");
  auto* pr = add_experiment("props", "verify the bias propositions numerically");
  std::string pde_kind;
  pd->add_option("--kind", pde_kind, "darcy or helmholtz (default: config, then darcy)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return do_gen_data(gen_kind, gen_n, gen_alpha, gen_grid, gen_fmax, gen_k,
                         gen_ell, gen_seed, gen_out);
    if (tr->parsed())
      return do_train(tr_dataset, tr_variant, tr_cf, tr_tc, tr_sched, tr_hidden,
                      tr_depth, tr_seed, tr_trace, tr_out);
    if (sa->parsed())
      return do_sample(sa_ckpt, sa_n, sa_steps, sa_chunk, sa_guidance, sa_scale,
                       sa_m, sa_cf, sa_sched, sa_seed, sa_out);
    if (ev->parsed())
      return do_eval(ev_samples, ev_reference, ev_nest, ev_nper, ev_cf, ev_seed,
                     ev_out);
    if (ci->parsed()) return run_experiment("circles", ex_config, ex_sets, ex_seed, ex_out);
    if (pd->parsed()) return run_experiment(pde_kind, ex_config, ex_sets, ex_seed, ex_out);
    if (pr->parsed()) return run_experiment("props", ex_config, ex_sets, ex_seed, ex_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
