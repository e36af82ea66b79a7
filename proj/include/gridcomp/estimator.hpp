#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridcomp/grid.hpp"

namespace gridcomp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// K retained draws of per-cell composition over the unbuffered domain.
// values is laid out [sample][cell][taxon], cells in row-major order from the
// southwest corner (GridSpec::output_index).
struct PosteriorSamples {
  GridSpec grid;  // buffer is always 0 here
  std::vector<std::string> taxa;
  int num_samples = 0;
  std::vector<double> values;

  int num_cells() const { return grid.num_interior(); }
  int num_taxa() const { return static_cast<int>(taxa.size()); }
  std::size_t offset(int k, int cell, int p) const {
    return (static_cast<std::size_t>(k) * num_cells() + cell) * num_taxa() + p;
  }
  double at(int k, int cell, int p) const { return values[offset(k, cell, p)]; }
  Eigen::Map<const RowMatrix> sample(int k) const {
    return {values.data() + offset(k, 0, 0), num_cells(), num_taxa()};
  }
  void append(const Eigen::Ref<const RowMatrix>& theta);
  // Series of one (cell, taxon) across samples.
  std::vector<double> series(int cell, int p) const;
};

struct PosteriorSummary {
  GridSpec grid;
  std::vector<std::string> taxa;
  // cells x taxa
  Eigen::MatrixXd mean;
  Eigen::MatrixXd sd;
  Eigen::MatrixXd q025;
  Eigen::MatrixXd q975;
};

// Per-cell argmax frequencies of t_mc draws W ~ N(alpha_i, I); alpha has one
// row per cell. Cell i draws from make_stream(seed, Stream::theta, sample_index, i).
RowMatrix estimate_theta(const Eigen::Ref<const Eigen::MatrixXd>& alpha, int t_mc, std::uint64_t seed,
                         std::uint64_t sample_index);

// Sample mean, sd (divisor K - 1) and 2.5% / 97.5% quantiles. Quantiles
// interpolate linearly between order statistics at position (K - 1) q.
PosteriorSummary summarize(const PosteriorSamples& samples);

// Linear-interpolation quantile of already sorted data.
double sorted_quantile(std::span<const double> sorted, double q);

// Initial positive sequence estimator: tau = -1 + 2 sum_k (rho_2k + rho_2k+1)
// over the leading run of positive pair sums; ESS = K / tau clamped to (0, K].
// A constant series returns K.
double effective_sample_size(std::span<const double> series);

}  // namespace gridcomp
