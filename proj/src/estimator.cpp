#include "gridcomp/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "gridcomp/error.hpp"
#include "gridcomp/random.hpp"

namespace gridcomp {

void PosteriorSamples::append(const Eigen::Ref<const RowMatrix>& theta) {
  if (theta.rows() != num_cells() || theta.cols() != num_taxa())
    throw InvalidArgument("theta sample has the wrong shape");
  values.insert(values.end(), theta.data(), theta.data() + theta.size());
  ++num_samples;
}

std::vector<double> PosteriorSamples::series(int cell, int p) const {
  std::vector<double> out(num_samples);
  for (int k = 0; k < num_samples; ++k) out[k] = at(k, cell, p);
  return out;
}

RowMatrix estimate_theta(const Eigen::Ref<const Eigen::MatrixXd>& alpha, int t_mc, std::uint64_t seed,
                         std::uint64_t sample_index) {
  if (t_mc < 1) throw InvalidArgument("t_mc must be at least 1");
  const auto cells = static_cast<int>(alpha.rows());
  const auto P = static_cast<int>(alpha.cols());
  RowMatrix theta(cells, P);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cells; ++i) {
    StreamRng rng = make_stream(seed, Stream::theta, sample_index, static_cast<std::uint64_t>(i));
    std::vector<long> wins(P, 0);
    for (int t = 0; t < t_mc; ++t) {
      int best = 0;
      double best_w = alpha(i, 0) + standard_normal(rng);
      for (int p = 1; p < P; ++p) {
        const double w = alpha(i, p) + standard_normal(rng);
        if (w > best_w) {
          best_w = w;
          best = p;
        }
      }
      ++wins[best];
    }
    for (int p = 0; p < P; ++p) theta(i, p) = static_cast<double>(wins[p]) / t_mc;
  }
  return theta;
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PosteriorSummary summarize(const PosteriorSamples& samples) {
  const int K = samples.num_samples;
  if (K < 2) throw InvalidArgument("summaries need at least two posterior samples");
  const int m = samples.num_cells();
  const int P = samples.num_taxa();
  PosteriorSummary s{samples.grid, samples.taxa, Eigen::MatrixXd(m, P), Eigen::MatrixXd(m, P),
                     Eigen::MatrixXd(m, P), Eigen::MatrixXd(m, P)};
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    std::vector<double> v(K);
    for (int p = 0; p < P; ++p) {
      for (int k = 0; k < K; ++k) v[k] = samples.at(k, i, p);
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= K;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      std::sort(v.begin(), v.end());
      s.mean(i, p) = mean;
      s.sd(i, p) = std::sqrt(ss / (K - 1));
      s.q025(i, p) = sorted_quantile(v, 0.025);
      s.q975(i, p) = sorted_quantile(v, 0.975);
    }
  }
  return s;
}

double effective_sample_size(std::span<const double> series) {
  const auto K = static_cast<long>(series.size());
  if (K < 10) throw InvalidArgument("effective sample size needs at least 10 draws");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) return static_cast<double>(K);
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(K);
  double c0 = 0.0;
  for (double x : series) c0 += (x - mean) * (x - mean);
  c0 /= static_cast<double>(K);
  if (!(c0 > 0.0)) return static_cast<double>(K);

  auto autocorr = [&](long lag) {
    double c = 0.0;
    for (long t = 0; t + lag < K; ++t) c += (series[t] - mean) * (series[t + lag] - mean);
    return c / static_cast<double>(K) / c0;
  };
  double tau = -1.0;
  for (long k = 0; 2 * k + 1 < K; ++k) {
    const double pair = (k == 0 ? 1.0 : autocorr(2 * k)) + autocorr(2 * k + 1);
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  if (!(tau > 0.0)) return static_cast<double>(K);
  return std::min(static_cast<double>(K), static_cast<double>(K) / tau);
}

}  // namespace gridcomp
