#include "scdiff/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "scdiff/io.hpp"
#include "scdiff/version.hpp"

namespace scdiff {

std::vector<VarRef> leaf_all(Graph& g, const ParamSet& ps) {
  std::vector<VarRef> out;
  out.reserve(ps.size());
  for (const Tensor& v : ps.values) out.push_back(g.leaf(v));
  return out;
}

Precond precond(double sigma, double sigma_data) {
  if (!(sigma > 0) || !(sigma_data > 0))
    throw std::invalid_argument("precond: sigma and sigma_data must be positive");
  double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  Precond p;
  p.c_skip = d2 / (s2 + d2);
  p.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  p.c_in = 1.0 / std::sqrt(s2 + d2);
  p.c_noise = 0.25 * std::log(sigma);
  return p;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::pidm: return "pidm";
    case Variant::scd: return "scd";
  }
  throw std::logic_error("variant_name: bad variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "vanilla") return Variant::vanilla;
  if (name == "pidm") return Variant::pidm;
  if (name == "scd") return Variant::scd;
  throw std::invalid_argument("unknown denoiser variant: " + name);
}

DenoiserModel DenoiserModel::init(Variant variant,
                                  std::vector<std::size_t> sample_shape,
                                  double sigma_data,
                                  std::shared_ptr<const ConstraintField> field,
                                  Rng& rng, std::size_t hidden, std::size_t depth) {
  if (sample_shape.empty())
    throw std::invalid_argument("denoiser: empty sample shape");
  if (hidden == 0 || depth == 0)
    throw std::invalid_argument("denoiser: hidden and depth must be positive");
  DenoiserModel m;
  m.variant = variant;
  m.sample_shape = std::move(sample_shape);
  m.hidden = hidden;
  m.depth = depth;
  m.sigma_data = sigma_data;
  if (variant == Variant::scd) {
    if (!field)
      throw std::invalid_argument("denoiser: scd variant requires a constraint field");
    if (field->domain_numel() != m.dim())
      throw std::invalid_argument(
          "denoiser: constraint domain does not match the sample shape");
    m.field = std::move(field);
    m.constraint_descriptor = m.field->descriptor();
  }
  m.gamma_pooled = m.sample_shape.size() > 1;
  m.channel_mean.assign(m.channels(), 0.0);
  m.channel_std.assign(m.channels(), 1.0);

  auto init_w = [&rng](std::size_t fan_in, std::size_t fan_out) {
    double a = std::sqrt(3.0 / double(fan_in));
    return rng.uniform_tensor({fan_in, fan_out}, -a, a);
  };
  std::size_t in = m.dim() + 1;  // c_in x and the c_noise column
  for (std::size_t l = 0; l < depth; ++l) {
    m.params.add("mlp.w" + std::to_string(l), init_w(in, hidden));
    m.params.add("mlp.b" + std::to_string(l), Tensor::zeros({hidden}));
    in = hidden;
  }
  // Zero output head so the initial denoiser is exactly c_skip x.
  m.params.add("mlp.w_out", Tensor::zeros({hidden, m.dim()}));
  m.params.add("mlp.b_out", Tensor::zeros({m.dim()}));
  m.gamma_first = m.params.size();

  if (variant == Variant::scd) {
    std::size_t gin = m.gamma_pooled ? 2 * m.channels() + 1 : m.dim() + 1;
    for (std::size_t l = 0; l < m.gamma_depth; ++l) {
      m.params.add("gamma.w" + std::to_string(l), init_w(gin, m.gamma_hidden));
      m.params.add("gamma.b" + std::to_string(l), Tensor::zeros({m.gamma_hidden}));
      gin = m.gamma_hidden;
    }
    // Zero head puts the softplus output at ln 2 for every input.
    m.params.add("gamma.w_out", Tensor::zeros({gin, 1}));
    m.params.add("gamma.b_out", Tensor::zeros({1}));
  }
  return m;
}

namespace {

VarRef col_const(Graph& g, const std::vector<double>& v) {
  return g.constant(Tensor({v.size(), 1}, v));
}

}  // namespace

DenoiserModel::ForwardNodes DenoiserModel::forward_nodes(
    Graph& g, const std::vector<VarRef>& refs, const VarRef& x_t,
    const std::vector<double>& sigmas) const {
  if (refs.size() != params.size())
    throw std::invalid_argument("denoiser: leaf refs do not match the parameter set");
  if (x_t.shape.size() != 2 || x_t.shape[1] != dim())
    throw std::invalid_argument("denoiser: x_t must be (batch, " +
                                std::to_string(dim()) + ")");
  std::size_t batch = x_t.shape[0];
  if (sigmas.size() != batch)
    throw std::invalid_argument("denoiser: one sigma per batch row required");

  std::vector<double> c_in(batch), c_noise(batch), c_skip(batch), c_out(batch),
      sig2(batch), lnsig(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    if (!(sigmas[i] > 0))
      throw std::invalid_argument("denoiser: sigma must be positive");
    Precond p = precond(sigmas[i], sigma_data);
    c_in[i] = p.c_in;
    c_noise[i] = p.c_noise;
    c_skip[i] = p.c_skip;
    c_out[i] = p.c_out;
    sig2[i] = sigmas[i] * sigmas[i];
    lnsig[i] = std::log(sigmas[i]);
  }

  VarRef h = concat_cols(g, mul(g, x_t, col_const(g, c_in)), col_const(g, c_noise));
  std::size_t p = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    h = silu(g, add(g, matmul(g, h, refs[p]), refs[p + 1]));
    p += 2;
  }
  VarRef f = add(g, matmul(g, h, refs[p]), refs[p + 1]);
  VarRef d_base =
      add(g, mul(g, x_t, col_const(g, c_skip)), mul(g, f, col_const(g, c_out)));

  ForwardNodes out;
  out.d_base = d_base;
  out.d = d_base;
  if (variant != Variant::scd) return out;
  if (!field)
    throw std::logic_error("denoiser: scd model has no constraint field attached");

  VarRef glc = constraint_grad(g, d_base, *field);

  VarRef feats;
  if (gamma_pooled) {
    std::size_t per = dim() / channels();
    bool first = true;
    for (std::size_t c = 0; c < channels(); ++c) {
      VarRef blk = slice_cols(g, d_base, c * per, (c + 1) * per);
      VarRef mu = scale(g, sum_rows(g, blk), 1.0 / double(per));
      VarRef dev = sub(g, blk, mu);
      VarRef var = scale(g, sum_rows(g, square(g, dev)), 1.0 / double(per));
      VarRef sd =
          sqrt(g, add(g, var, g.constant(Tensor::full({batch, 1}, 1e-12))));
      VarRef pair = concat_cols(g, mu, sd);
      feats = first ? pair : concat_cols(g, feats, pair);
      first = false;
    }
    feats = concat_cols(g, feats, col_const(g, lnsig));
  } else {
    feats = concat_cols(g, d_base, col_const(g, lnsig));
  }

  VarRef gh = feats;
  std::size_t q = gamma_first;
  for (std::size_t l = 0; l < gamma_depth; ++l) {
    gh = elu(g, add(g, matmul(g, gh, refs[q]), refs[q + 1]));
    q += 2;
  }
  VarRef z = add(g, matmul(g, gh, refs[q]), refs[q + 1]);
  VarRef gam = softplus(g, z);
  VarRef coef = mul(g, gam, col_const(g, sig2));
  if (gamma_multiplier != 1.0) coef = scale(g, coef, gamma_multiplier);

  out.gamma = gam;
  out.has_gamma = true;
  out.d = add(g, d_base, mul(g, glc, coef));
  return out;
}

VarRef DenoiserModel::forward(Graph& g, const std::vector<VarRef>& refs,
                              const VarRef& x_t,
                              const std::vector<double>& sigmas) const {
  return forward_nodes(g, refs, x_t, sigmas).d;
}

Tensor DenoiserModel::denoise(const Tensor& x, double sigma) const {
  Graph g;
  auto refs = leaf_all(g, params);
  VarRef xr = g.constant(x);
  std::vector<double> sig(x.rows(), sigma);
  return g.val(forward(g, refs, xr, sig));
}

Tensor DenoiserModel::denoise_vjp(const Tensor& x, double sigma,
                                  const Tensor& cot) const {
  Graph g;
  auto refs = leaf_all(g, params);
  VarRef xr = g.leaf(x);
  std::vector<double> sig(x.rows(), sigma);
  VarRef d = forward(g, refs, xr, sig);
  Gradients grads = backward_from(g, d, cot);
  return grads.of(xr);
}

Tensor DenoiserModel::gamma(const Tensor& x, double sigma) const {
  if (variant != Variant::scd)
    throw std::logic_error("denoiser: gamma is only defined for scd models");
  Graph g;
  auto refs = leaf_all(g, params);
  VarRef xr = g.constant(x);
  std::vector<double> sig(x.rows(), sigma);
  return g.val(forward_nodes(g, refs, xr, sig).gamma);
}

void save_checkpoint(const std::string& path, const DenoiserModel& model) {
  Container c;
  c.meta = Json{{"kind", "denoiser-checkpoint"},
                {"toolkit", kVersion},
                {"variant", variant_name(model.variant)},
                {"sample_shape", model.sample_shape},
                {"hidden", model.hidden},
                {"depth", model.depth},
                {"sigma_data", model.sigma_data},
                {"gamma_hidden", model.gamma_hidden},
                {"gamma_depth", model.gamma_depth},
                {"gamma_pooled", model.gamma_pooled},
                {"gamma_multiplier", model.gamma_multiplier},
                {"gamma_first", model.gamma_first},
                {"constraint", model.constraint_descriptor},
                {"channel_mean", model.channel_mean},
                {"channel_std", model.channel_std}};
  for (std::size_t i = 0; i < model.params.size(); ++i)
    c.tensors.emplace_back(model.params.names[i], model.params.values[i]);
  write_container(path, c);
}

DenoiserModel load_checkpoint(const std::string& path,
                              std::shared_ptr<const ConstraintField> field) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "denoiser-checkpoint")
    throw std::runtime_error("not a denoiser checkpoint: " + path);
  DenoiserModel m;
  m.variant = variant_from_name(c.meta.at("variant").get<std::string>());
  m.sample_shape = c.meta.at("sample_shape").get<std::vector<std::size_t>>();
  m.hidden = c.meta.at("hidden").get<std::size_t>();
  m.depth = c.meta.at("depth").get<std::size_t>();
  m.sigma_data = c.meta.at("sigma_data").get<double>();
  m.gamma_hidden = c.meta.at("gamma_hidden").get<std::size_t>();
  m.gamma_depth = c.meta.at("gamma_depth").get<std::size_t>();
  m.gamma_pooled = c.meta.at("gamma_pooled").get<bool>();
  m.gamma_multiplier = c.meta.at("gamma_multiplier").get<double>();
  m.gamma_first = c.meta.at("gamma_first").get<std::size_t>();
  m.constraint_descriptor = c.meta.at("constraint").get<std::string>();
  m.channel_mean = c.meta.at("channel_mean").get<std::vector<double>>();
  m.channel_std = c.meta.at("channel_std").get<std::vector<double>>();
  for (auto& [name, t] : c.tensors) m.params.add(name, std::move(t));
  if (field) {
    if (field->domain_numel() != m.dim())
      throw std::invalid_argument(
          "load_checkpoint: constraint domain does not match the checkpoint");
    m.field = std::move(field);
  }
  return m;
}

}  // namespace scdiff
