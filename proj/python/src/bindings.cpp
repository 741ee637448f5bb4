// Python bindings over the core library: data generation, constraint fields,
// denoiser training, probability-flow sampling with optional guidance, and
// the evaluation metrics.
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "scdiff/data.hpp"
#include "scdiff/denoiser.hpp"
#include "scdiff/metrics.hpp"
#include "scdiff/sample.hpp"
#include "scdiff/schedule.hpp"
#include "scdiff/train.hpp"

namespace py = pybind11;
using namespace scdiff;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const NpArray& a) {
  std::vector<std::size_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); i++)
    shape[i] = static_cast<std::size_t>(a.shape(i));
  Tensor t(shape);
  std::memcpy(t.data.data(), a.data(), sizeof(double) * t.numel());
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::memcpy(a.mutable_data(), t.data.data(), sizeof(double) * t.numel());
  return a;
}

// Opaque score wrapper so guided and plain scores share one sampling entry.
struct Score {
  ScoreFn fn;
  py::array_t<double> call(const NpArray& x, double sigma) const {
    return to_array(fn(to_tensor(x), sigma));
  }
};

DivergenceMode mode_from_name(const std::string& name) {
  if (name == "exact") return DivergenceMode::exact;
  if (name == "rademacher") return DivergenceMode::rademacher;
  if (name == "finite_difference") return DivergenceMode::finite_difference;
  throw std::invalid_argument("unknown divergence mode '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "diffusion models with softly constrained denoisers";
  m.attr("__version__") = "0.1.0";

  py::class_<Rng>(m, "Rng")
      .def(py::init<uint64_t>(), py::arg("seed"))
      .def_static("substream", &Rng::substream, py::arg("seed"),
                  py::arg("stream"))
      .def("uniform", [](Rng& r) { return r.uniform(); })
      .def("normal", &Rng::normal)
      .def("index", &Rng::index, py::arg("n"))
      .def(
          "normal_tensor",
          [](Rng& r, std::vector<std::size_t> shape, double scale) {
            return to_array(r.normal_tensor(shape, scale));
          },
          py::arg("shape"), py::arg("scale") = 1.0);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init<>())
      .def_readwrite("sigma_min", &NoiseSchedule::sigma_min)
      .def_readwrite("sigma_max", &NoiseSchedule::sigma_max)
      .def_readwrite("sigma_data", &NoiseSchedule::sigma_data)
      .def_readwrite("rho", &NoiseSchedule::rho);

  py::class_<NoiseLevelDist>(m, "NoiseLevelDist")
      .def(py::init<>())
      .def_readwrite("mu", &NoiseLevelDist::mu)
      .def_readwrite("s", &NoiseLevelDist::s)
      .def_readwrite("ln_min", &NoiseLevelDist::ln_min);

  m.def("karras_time_grid", &karras_time_grid, py::arg("sched"),
        py::arg("n_steps"));
  m.def("loss_weight", &loss_weight, py::arg("sigma"), py::arg("sigma_data"));
  m.def("sample_noise_level", &sample_noise_level, py::arg("dist"),
        py::arg("rng"));
  m.def("truncated_lognormal_mean", &truncated_lognormal_mean, py::arg("dist"));
  m.def(
      "noising",
      [](const NpArray& x0, double sigma, const NpArray& eps) {
        return to_array(noising(to_tensor(x0), sigma, to_tensor(eps)));
      },
      py::arg("x0"), py::arg("sigma"), py::arg("eps"));

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init([](std::size_t n) { return GridSpec{n}; }), py::arg("n"))
      .def_readwrite("n", &GridSpec::n)
      .def("h", &GridSpec::h);

  py::class_<DarcySource>(m, "DarcySource")
      .def_static("make", &DarcySource::make, py::arg("grid"), py::arg("f_max"))
      .def_readwrite("f_max", &DarcySource::f_max)
      .def("field",
           [](const DarcySource& s, const GridSpec& g) {
             return to_array(s.field(g));
           },
           py::arg("grid"));

  py::class_<ConstraintField, std::shared_ptr<ConstraintField>>(
      m, "ConstraintField")
      .def("descriptor", &ConstraintField::descriptor)
      .def("domain_shape", &ConstraintField::domain_shape)
      .def("residual",
           [](const ConstraintField& f, const NpArray& x) {
             return to_array(f.residual(to_tensor(x)));
           })
      .def("log_lc",
           [](const ConstraintField& f, const NpArray& x) {
             return f.log_lc(to_tensor(x));
           })
      .def("grad_log_lc",
           [](const ConstraintField& f, const NpArray& x) {
             return to_array(f.grad_log_lc(to_tensor(x)));
           })
      .def("hvp_log_lc",
           [](const ConstraintField& f, const NpArray& x, const NpArray& v) {
             return to_array(f.hvp_log_lc(to_tensor(x), to_tensor(v)));
           })
      .def("sq_residual_norm",
           [](const ConstraintField& f, const NpArray& x) {
             return f.sq_residual_norm(to_tensor(x));
           })
      .def("grad_sq_residual_norm",
           [](const ConstraintField& f, const NpArray& x) {
             return to_array(f.grad_sq_residual_norm(to_tensor(x)));
           });

  py::class_<CircleField, ConstraintField, std::shared_ptr<CircleField>>(
      m, "CircleField")
      .def(py::init<double>(), py::arg("c") = 1.0);

  py::class_<DarcyField, ConstraintField, std::shared_ptr<DarcyField>>(
      m, "DarcyField")
      .def(py::init<GridSpec, DarcySource>(), py::arg("grid"),
           py::arg("source"));

  py::class_<HelmholtzField, ConstraintField, std::shared_ptr<HelmholtzField>>(
      m, "HelmholtzField")
      .def(py::init<GridSpec, double>(), py::arg("grid"), py::arg("k"));

  py::class_<NormalizedField, ConstraintField, std::shared_ptr<NormalizedField>>(
      m, "NormalizedField")
      .def(py::init<std::shared_ptr<const ConstraintField>,
                    std::vector<double>, std::vector<double>>(),
           py::arg("base"), py::arg("channel_mean"), py::arg("channel_std"));

  m.def("misspecify_darcy", &misspecify_darcy, py::arg("field"),
        py::arg("f_max_constraint"));
  m.def("misspecify_helmholtz", &misspecify_helmholtz, py::arg("field"),
        py::arg("sigma_obs"), py::arg("rng"));

  py::class_<Dataset>(m, "Dataset")
      .def_readwrite("sample_shape", &Dataset::sample_shape)
      .def_property(
          "samples", [](const Dataset& d) { return to_array(d.samples); },
          [](Dataset& d, const NpArray& a) { d.samples = to_tensor(a); })
      .def_readwrite("channel_mean", &Dataset::channel_mean)
      .def_readwrite("channel_std", &Dataset::channel_std)
      .def_readwrite("descriptor", &Dataset::descriptor)
      .def("size", &Dataset::size)
      .def("dim", &Dataset::dim)
      .def("channels", &Dataset::channels)
      .def("compute_stats", &Dataset::compute_stats)
      .def("normalized",
           [](const Dataset& d) { return to_array(d.normalized()); })
      .def("normalize_rows",
           [](const Dataset& d, const NpArray& raw) {
             return to_array(d.normalize_rows(to_tensor(raw)));
           })
      .def("denormalize", [](const Dataset& d, const NpArray& x) {
        return to_array(d.denormalize(to_tensor(x)));
      });

  m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("dataset"));
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("sample_unit_circle", &sample_unit_circle, py::arg("n"), py::arg("rng"));
  m.def("sample_dent", &sample_dent, py::arg("n"), py::arg("rng"));
  m.def("dent_radius", &dent_radius, py::arg("theta"));
  m.def("sample_chop", &sample_chop, py::arg("n"), py::arg("alpha"),
        py::arg("rng"));
  m.def("gen_darcy_dataset", &gen_darcy_dataset, py::arg("n_samples"),
        py::arg("grid"), py::arg("source"), py::arg("length_scale"),
        py::arg("rng"));
  m.def("gen_helmholtz_dataset", &gen_helmholtz_dataset, py::arg("n_samples"),
        py::arg("grid"), py::arg("k"), py::arg("rng"));

  py::enum_<Variant>(m, "Variant")
      .value("vanilla", Variant::vanilla)
      .value("pidm", Variant::pidm)
      .value("scd", Variant::scd);
  m.def("variant_from_name", &variant_from_name, py::arg("name"));

  py::class_<DenoiserModel>(m, "DenoiserModel")
      .def_static(
          "init",
          [](Variant v, std::vector<std::size_t> sample_shape, double sigma_data,
             std::shared_ptr<const ConstraintField> field, Rng& rng,
             std::size_t hidden, std::size_t depth) {
            return DenoiserModel::init(v, std::move(sample_shape), sigma_data,
                                       std::move(field), rng, hidden, depth);
          },
          py::arg("variant"), py::arg("sample_shape"), py::arg("sigma_data"),
          py::arg("field"), py::arg("rng"), py::arg("hidden") = 128,
          py::arg("depth") = 3)
      .def_readonly("variant", &DenoiserModel::variant)
      .def_readonly("sample_shape", &DenoiserModel::sample_shape)
      .def_readonly("hidden", &DenoiserModel::hidden)
      .def_readonly("depth", &DenoiserModel::depth)
      .def_readonly("constraint_descriptor", &DenoiserModel::constraint_descriptor)
      .def_readwrite("gamma_multiplier", &DenoiserModel::gamma_multiplier)
      .def_readwrite("channel_mean", &DenoiserModel::channel_mean)
      .def_readwrite("channel_std", &DenoiserModel::channel_std)
      .def("dim", &DenoiserModel::dim)
      .def("channels", &DenoiserModel::channels)
      .def("n_params",
           [](const DenoiserModel& mdl) {
             std::size_t n = 0;
             for (const Tensor& t : mdl.params.values) n += t.numel();
             return n;
           })
      .def("denoise",
           [](const DenoiserModel& mdl, const NpArray& x, double sigma) {
             return to_array(mdl.denoise(to_tensor(x), sigma));
           },
           py::arg("x"), py::arg("sigma"))
      .def("gamma",
           [](const DenoiserModel& mdl, const NpArray& x, double sigma) {
             return to_array(mdl.gamma(to_tensor(x), sigma));
           },
           py::arg("x"), py::arg("sigma"));

  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"),
        py::arg("field") = std::shared_ptr<const ConstraintField>());

  py::class_<TracePoint>(m, "TracePoint")
      .def_readonly("iter", &TracePoint::iter)
      .def_readonly("loss", &TracePoint::loss)
      .def_readonly("wall_ms", &TracePoint::wall_ms);

  py::class_<TrainStats>(m, "TrainStats")
      .def_readonly("trace", &TrainStats::trace)
      .def_readonly("iters", &TrainStats::iters)
      .def_readonly("final_loss", &TrainStats::final_loss);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("max_iters", &TrainConfig::max_iters)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("ema_decay", &TrainConfig::ema_decay)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("pidm_lambda", &TrainConfig::pidm_lambda)
      .def_readwrite("noise", &TrainConfig::noise)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("log_every", &TrainConfig::log_every);

  m.def(
      "train",
      [](DenoiserModel& model, const NpArray& data, const TrainConfig& cfg,
         const NoiseSchedule& sched,
         std::shared_ptr<const ConstraintField> penalty_field) {
        Tensor d = to_tensor(data);
        py::gil_scoped_release release;
        return train(model, d, cfg, sched, penalty_field.get());
      },
      py::arg("model"), py::arg("data"), py::arg("config"), py::arg("sched"),
      py::arg("penalty_field") = std::shared_ptr<const ConstraintField>());

  py::class_<Score>(m, "Score").def("__call__", &Score::call, py::arg("x"),
                                    py::arg("sigma"));

  m.def("model_score",
        [](const DenoiserModel& mdl) { return Score{model_score(mdl)}; },
        py::arg("model"), py::keep_alive<0, 1>());
  m.def(
      "dps_guided_score",
      [](const DenoiserModel& mdl, std::shared_ptr<const ConstraintField> f,
         double scale, bool allow_scd) {
        return Score{dps_guided_score(mdl, std::move(f), scale, allow_scd)};
      },
      py::arg("model"), py::arg("field"), py::arg("scale") = 1.0,
      py::arg("allow_scd") = false, py::keep_alive<0, 1>());
  m.def(
      "lgd_guided_score",
      [](const DenoiserModel& mdl, std::shared_ptr<const ConstraintField> f,
         std::size_t m_samples, uint64_t seed, double scale, bool allow_scd) {
        return Score{
            lgd_guided_score(mdl, std::move(f), m_samples, seed, scale, allow_scd)};
      },
      py::arg("model"), py::arg("field"), py::arg("m_samples"), py::arg("seed"),
      py::arg("scale") = 1.0, py::arg("allow_scd") = false,
      py::keep_alive<0, 1>());
  m.def(
      "score_from",
      [](py::function fn) {
        return Score{[fn](const Tensor& x, double sigma) {
          return to_tensor(fn(to_array(x), sigma).cast<NpArray>());
        }};
      },
      py::arg("fn"));

  m.def(
      "heun_sample",
      [](const Score& s, const NoiseSchedule& sched, std::size_t n_steps,
         std::size_t batch, std::size_t dim, Rng& rng) {
        return to_array(heun_sample(s.fn, sched, n_steps, batch, dim, rng));
      },
      py::arg("score"), py::arg("sched"), py::arg("n_steps"), py::arg("batch"),
      py::arg("dim"), py::arg("rng"));
  m.def(
      "heun_sample_from",
      [](const Score& s, const NoiseSchedule& sched, std::size_t n_steps,
         const NpArray& x) {
        return to_array(heun_sample_from(s.fn, sched, n_steps, to_tensor(x)));
      },
      py::arg("score"), py::arg("sched"), py::arg("n_steps"), py::arg("x"));

  m.def(
      "nll_bits_per_dim",
      [](const DenoiserModel& mdl, const NoiseSchedule& sched, const NpArray& x0,
         std::size_t n_steps, const std::string& mode, std::size_t probes,
         double fd_eps, uint64_t seed) {
        NllConfig cfg;
        cfg.n_steps = n_steps;
        cfg.mode = mode_from_name(mode);
        cfg.probes = probes;
        cfg.fd_eps = fd_eps;
        cfg.seed = seed;
        Tensor x = to_tensor(x0);
        py::gil_scoped_release release;
        return nll_bits_per_dim(ops_of(mdl), sched, x, cfg);
      },
      py::arg("model"), py::arg("sched"), py::arg("x0"),
      py::arg("n_steps") = 200, py::arg("mode") = "exact",
      py::arg("probes") = 8, py::arg("fd_eps") = 1e-4, py::arg("seed") = 0);
  m.def(
      "nll_bits_per_dim_score",
      [](const Score& s, const NoiseSchedule& sched, const NpArray& x0,
         std::size_t n_steps, std::size_t probes, double fd_eps, uint64_t seed) {
        NllConfig cfg;
        cfg.n_steps = n_steps;
        cfg.mode = DivergenceMode::finite_difference;
        cfg.probes = probes;
        cfg.fd_eps = fd_eps;
        cfg.seed = seed;
        return nll_bits_per_dim(s.fn, sched, to_tensor(x0), cfg);
      },
      py::arg("score"), py::arg("sched"), py::arg("x0"),
      py::arg("n_steps") = 200, py::arg("probes") = 8, py::arg("fd_eps") = 1e-4,
      py::arg("seed") = 0);

  py::class_<MetricReport>(m, "MetricReport")
      .def_readonly("metric", &MetricReport::metric)
      .def_readonly("mean", &MetricReport::mean)
      .def_readonly("half_width", &MetricReport::half_width)
      .def_readonly("n_estimates", &MetricReport::n_estimates)
      .def_readonly("n_per", &MetricReport::n_per);

  m.def(
      "wasserstein1",
      [](const NpArray& a, const NpArray& b) {
        return wasserstein1(to_tensor(a), to_tensor(b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "w1_protocol",
      [](const Score& s, const NoiseSchedule& sched, std::size_t n_steps,
         const NpArray& reference, std::size_t n_estimates, std::size_t n_per,
         Rng& rng) {
        Tensor ref = to_tensor(reference);
        std::size_t dim = ref.shape.at(1);
        BatchSampler sampler = [&s, &sched, n_steps, dim](std::size_t n,
                                                          Rng& r) {
          return heun_sample(s.fn, sched, n_steps, n, dim, r);
        };
        return w1_protocol(sampler, ref, n_estimates, n_per, rng);
      },
      py::arg("score"), py::arg("sched"), py::arg("n_steps"),
      py::arg("reference"), py::arg("n_estimates"), py::arg("n_per"),
      py::arg("rng"));
  m.def(
      "residual_stats",
      [](const NpArray& samples, const ConstraintField& field) {
        return residual_stats(to_tensor(samples), field);
      },
      py::arg("samples"), py::arg("field"));
}
