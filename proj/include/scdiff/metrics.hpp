#pragma once

#include <functional>
#include <string>

#include "scdiff/constraints.hpp"
#include "scdiff/rng.hpp"
#include "scdiff/tensor.hpp"

namespace scdiff {

// Minimum-cost perfect matching on a square cost matrix via shortest
// augmenting paths with dual potentials. Returns the column matched to each
// row.
std::vector<std::size_t> solve_assignment(const Tensor& cost);

// Exact 1-Wasserstein distance between equal-size point sets under the
// Euclidean ground metric: the optimal matching cost divided by N.
double wasserstein1(const Tensor& a, const Tensor& b);

// Aggregate statistic with a two-standard-error half width (the CLT scale
// for the mean of the per-estimate values).
struct MetricReport {
  std::string metric;
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n_estimates = 0;
  std::size_t n_per = 0;
  std::string manifest_hash;

  std::vector<std::string> csv_row() const;
  static std::vector<std::string> csv_header();
};

MetricReport report_from_estimates(const std::string& metric,
                                   const std::vector<double>& estimates,
                                   std::size_t n_per,
                                   const std::string& manifest = "");

using BatchSampler = std::function<Tensor(std::size_t n, Rng& rng)>;

// Repeated-estimate W1 protocol: each estimate matches n_per fresh model
// samples against n_per reference points drawn without replacement.
MetricReport w1_protocol(const BatchSampler& sampler, const Tensor& reference,
                         std::size_t n_estimates, std::size_t n_per, Rng& rng,
                         const std::string& manifest = "");

// Mean absolute constraint residual per sample, aggregated across rows.
MetricReport residual_stats(const Tensor& samples, const ConstraintField& field,
                            const std::string& manifest = "");

struct Histogram {
  double lo = 0.0, hi = 0.0;  // observed channel range
  std::vector<std::size_t> counts;
};

// Equal-width per-channel histograms over the observed range.
std::vector<Histogram> marginal_histograms(const Tensor& samples,
                                           std::size_t channels,
                                           std::size_t n_bins);

}  // namespace scdiff
