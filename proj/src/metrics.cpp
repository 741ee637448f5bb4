#include "scdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scdiff/io.hpp"

namespace scdiff {

std::vector<std::size_t> solve_assignment(const Tensor& cost) {
  if (cost.shape.size() != 2 || cost.rows() != cost.cols())
    throw std::invalid_argument("solve_assignment: cost matrix must be square");
  const std::size_t n = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
  std::vector<std::ptrdiff_t> col4row(n, -1), row4col(n, -1), path(n, -1);
  std::vector<bool> sr(n), sc(n);
  std::vector<std::size_t> remaining(n);

  for (std::size_t cur = 0; cur < n; cur++) {
    std::fill(sr.begin(), sr.end(), false);
    std::fill(sc.begin(), sc.end(), false);
    std::fill(shortest.begin(), shortest.end(), kInf);
    for (std::size_t t = 0; t < n; t++) remaining[t] = n - t - 1;
    std::size_t num_remaining = n;
    double min_val = 0;
    std::size_t i = cur;
    std::ptrdiff_t sink = -1;
    while (sink == -1) {
      sr[i] = true;
      std::size_t index = 0;
      double lowest = kInf;
      for (std::size_t t = 0; t < num_remaining; t++) {
        std::size_t j = remaining[t];
        double r = min_val + cost.at2(i, j) - u[i] - v[j];
        if (r < shortest[j]) {
          path[j] = std::ptrdiff_t(i);
          shortest[j] = r;
        }
        if (shortest[j] < lowest ||
            (shortest[j] == lowest && row4col[j] == -1)) {
          lowest = shortest[j];
          index = t;
        }
      }
      min_val = lowest;
      if (min_val == kInf)
        throw std::runtime_error("solve_assignment: infeasible cost matrix");
      std::size_t j = remaining[index];
      if (row4col[j] == -1)
        sink = std::ptrdiff_t(j);
      else
        i = std::size_t(row4col[j]);
      sc[j] = true;
      remaining[index] = remaining[--num_remaining];
    }
    u[cur] += min_val;
    for (std::size_t r = 0; r < n; r++)
      if (sr[r] && r != cur) u[r] += min_val - shortest[std::size_t(col4row[r])];
    for (std::size_t j = 0; j < n; j++)
      if (sc[j]) v[j] -= min_val - shortest[j];
    std::ptrdiff_t j = sink;
    while (true) {
      std::size_t r = std::size_t(path[std::size_t(j)]);
      row4col[std::size_t(j)] = std::ptrdiff_t(r);
      std::swap(col4row[r], j);
      if (r == cur) break;
    }
  }
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; r++) out[r] = std::size_t(col4row[r]);
  return out;
}

double wasserstein1(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw std::invalid_argument("wasserstein1: point sets must be (n, d)");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("wasserstein1: point sets must match in size");
  const std::size_t n = a.rows(), d = a.cols();
  if (n == 0) throw std::invalid_argument("wasserstein1: empty point sets");
  if (n > 2000)
    throw std::invalid_argument(
        "wasserstein1: exact matching is capped at 2000 points per set");
  Tensor cost({n, n});
  for (std::size_t i = 0; i < n; i++)
    for (std::size_t j = 0; j < n; j++) {
      double s = 0;
      for (std::size_t k = 0; k < d; k++) {
        double diff = a.at2(i, k) - b.at2(j, k);
        s += diff * diff;
      }
      cost.at2(i, j) = std::sqrt(s);
    }
  std::vector<std::size_t> match = solve_assignment(cost);
  double total = 0;
  for (std::size_t i = 0; i < n; i++) total += cost.at2(i, match[i]);
  return total / double(n);
}

std::vector<std::string> MetricReport::csv_header() {
  return {"metric", "mean", "half_width", "n_estimates", "n_per",
          "manifest_hash"};
}

std::vector<std::string> MetricReport::csv_row() const {
  return {metric,
          format_double(mean),
          format_double(half_width),
          std::to_string(n_estimates),
          std::to_string(n_per),
          manifest_hash};
}

MetricReport report_from_estimates(const std::string& metric,
                                   const std::vector<double>& estimates,
                                   std::size_t n_per,
                                   const std::string& manifest) {
  if (estimates.empty())
    throw std::invalid_argument("report_from_estimates: no estimates");
  MetricReport rep;
  rep.metric = metric;
  rep.n_estimates = estimates.size();
  rep.n_per = n_per;
  rep.manifest_hash = manifest.empty() ? "" : hash_hex(manifest);
  double s = 0;
  for (double e : estimates) s += e;
  rep.mean = s / double(estimates.size());
  if (estimates.size() > 1) {
    double v = 0;
    for (double e : estimates) {
      double d = e - rep.mean;
      v += d * d;
    }
    double sd = std::sqrt(v / double(estimates.size() - 1));
    rep.half_width = 2.0 * sd / std::sqrt(double(estimates.size()));
  }
  return rep;
}

MetricReport w1_protocol(const BatchSampler& sampler, const Tensor& reference,
                         std::size_t n_estimates, std::size_t n_per, Rng& rng,
                         const std::string& manifest) {
  if (n_estimates < 1 || n_per < 1)
    throw std::invalid_argument("w1_protocol: need at least one estimate");
  if (reference.rows() < n_per)
    throw std::invalid_argument(
        "w1_protocol: reference pool smaller than n_per");
  std::vector<double> estimates;
  estimates.reserve(n_estimates);
  Tensor ref_batch({n_per, reference.cols()});
  for (std::size_t e = 0; e < n_estimates; e++) {
    Tensor model = sampler(n_per, rng);
    if (model.rows() != n_per || model.cols() != reference.cols())
      throw std::runtime_error("w1_protocol: sampler returned a bad batch");
    std::vector<std::size_t> pick =
        rng.sample_without_replacement(reference.rows(), n_per);
    for (std::size_t r = 0; r < n_per; r++)
      for (std::size_t c = 0; c < reference.cols(); c++)
        ref_batch.at2(r, c) = reference.at2(pick[r], c);
    estimates.push_back(wasserstein1(model, ref_batch));
  }
  return report_from_estimates("w1", estimates, n_per, manifest);
}

MetricReport residual_stats(const Tensor& samples, const ConstraintField& field,
                            const std::string& manifest) {
  if (samples.shape.size() != 2 || samples.rows() == 0)
    throw std::invalid_argument("residual_stats: need a nonempty (n, d) batch");
  std::vector<double> per_sample;
  per_sample.reserve(samples.rows());
  for (std::size_t r = 0; r < samples.rows(); r++) {
    Tensor R = field.residual(samples.row_as(r, field.domain_shape()));
    double s = 0;
    for (double v : R.data) s += std::abs(v);
    per_sample.push_back(s / double(R.numel()));
  }
  return report_from_estimates("mean_abs_residual", per_sample, 1, manifest);
}

std::vector<Histogram> marginal_histograms(const Tensor& samples,
                                           std::size_t channels,
                                           std::size_t n_bins) {
  if (samples.shape.size() != 2 || samples.rows() == 0)
    throw std::invalid_argument("marginal_histograms: need a nonempty batch");
  if (channels == 0 || samples.cols() % channels != 0)
    throw std::invalid_argument(
        "marginal_histograms: channels must divide the sample width");
  if (n_bins < 2)
    throw std::invalid_argument("marginal_histograms: need at least two bins");
  std::size_t per = samples.cols() / channels;
  std::vector<Histogram> out(channels);
  for (std::size_t c = 0; c < channels; c++) {
    Histogram& hist = out[c];
    hist.lo = std::numeric_limits<double>::infinity();
    hist.hi = -hist.lo;
    for (std::size_t r = 0; r < samples.rows(); r++)
      for (std::size_t k = 0; k < per; k++) {
        double v = samples.at2(r, c * per + k);
        hist.lo = std::min(hist.lo, v);
        hist.hi = std::max(hist.hi, v);
      }
    hist.counts.assign(n_bins, 0);
    double width = (hist.hi - hist.lo) / double(n_bins);
    for (std::size_t r = 0; r < samples.rows(); r++)
      for (std::size_t k = 0; k < per; k++) {
        double v = samples.at2(r, c * per + k);
        std::size_t bin = 0;
        if (width > 0) {
          double t = (v - hist.lo) / width;
          bin = std::min(n_bins - 1, std::size_t(std::max(0.0, t)));
        }
        hist.counts[bin]++;
      }
  }
  return out;
}

}  // namespace scdiff
