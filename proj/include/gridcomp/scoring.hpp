#pragma once

#include <climits>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridcomp/estimator.hpp"
#include "gridcomp/grid.hpp"
#include "gridcomp/model.hpp"
#include "gridcomp/precision.hpp"

namespace gridcomp {

// Held-out counts of one cell; `cell` is the position in the unbuffered
// output order (y * nx + x).
struct HeldoutCell {
  int cell;
  std::vector<int> counts;
  int total() const;
};

struct HeldoutSet {
  int num_taxa = 0;
  std::vector<HeldoutCell> cells;
  long total_trees() const;
};

enum class HoldoutKind { full_cell, per_tree };
const char* to_string(HoldoutKind kind);
HoldoutKind parse_holdout_kind(const std::string& text);

// Half-open rectangle of unbuffered cell coordinates.
struct Subregion {
  int x_min = 0;
  int x_max = INT_MAX;
  int y_min = 0;
  int y_max = INT_MAX;
  bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
};

// full_cell: all trees of round(fraction * eligible) randomly chosen cells
// with data inside the subregion. per_tree: round(fraction * total) gridded
// trees chosen uniformly across the whole dataset. Township trees always
// stay in training.
struct HoldoutDesign {
  HoldoutKind kind = HoldoutKind::full_cell;
  double fraction = 0.95;
  Subregion region;
  std::uint64_t seed = 1;
};

struct DataSplit {
  Dataset training;
  HeldoutSet heldout;
};

DataSplit split_dataset(const Dataset& data, const GridSpec& grid, const HoldoutDesign& design);

// Wraps gridded counts (for example a separately supplied held-out file).
HeldoutSet make_heldout(const GridSpec& grid, const std::vector<CellCount>& cells, int num_taxa);

// theta arguments hold one row per output cell.
using ThetaRef = Eigen::Ref<const RowMatrix>;

// (1/n) sum over trees and taxa of (one-hot - theta)^2.
double brier(const HeldoutSet& heldout, const ThetaRef& theta);
// -sum_i log Multinomial(Y_i; n_i, theta_i), zero proportions replaced by `floor`.
double neg_log_predictive_density(const HeldoutSet& heldout, const ThetaRef& theta, double floor = 1e-5);
// sqrt((1/(P n)) sum_i sum_p n_i (Y_ip/n_i - theta_ip)^2)
double weighted_rmspe(const HeldoutSet& heldout, const ThetaRef& theta);
// (1/(P n)) sum_i sum_p n_i |Y_ip/n_i - theta_ip|
double weighted_mae(const HeldoutSet& heldout, const ThetaRef& theta);

enum class Metric { brier, neg_log_density, rmspe, mae };
inline constexpr Metric kAllMetrics[] = {Metric::brier, Metric::neg_log_density, Metric::rmspe, Metric::mae};
const char* to_string(Metric metric);

double evaluate_metric(Metric metric, const HeldoutSet& heldout, const ThetaRef& theta, double floor = 1e-5);

// Metric evaluated at every retained sample.
std::vector<double> posterior_metric_values(Metric metric, const HeldoutSet& heldout, const PosteriorSamples& samples,
                                            double floor = 1e-5);

// Share of paired samples k where model A scores below (or not above) B.
struct PairedProbability {
  double a_lt_b;
  double a_le_b;
};
PairedProbability compare_metric_samples(std::span<const double> a, std::span<const double> b);

RowMatrix posterior_mean_theta(const PosteriorSamples& samples);

// binomial: per-sample Y ~ Binomial(n_i, theta_ip^(k)) scaled by 1/n_i.
// theta: quantiles of theta_ip^(k) alone.
enum class IntervalMethod { binomial, theta };
const char* to_string(IntervalMethod method);
IntervalMethod parse_interval_method(const std::string& text);

struct CoverageResult {
  bool empty = true;  // no cell reached min_trees
  int cells = 0;
  int intervals = 0;  // cells x taxa
  double coverage = 0.0;
  double mean_length = 0.0;
  double median_length = 0.0;
  // Fewer samples than needed to resolve the requested tail quantiles.
  bool low_k = false;
};

CoverageResult interval_coverage(const HeldoutSet& heldout, const PosteriorSamples& samples, double level = 0.95,
                                 int min_trees = 50, IntervalMethod method = IntervalMethod::binomial,
                                 std::uint64_t seed = 1);

struct ScoreOptions {
  double floor = 1e-5;
  double level = 0.95;
  int min_trees = 50;
  IntervalMethod interval_method = IntervalMethod::binomial;
  std::uint64_t seed = 1;
};

struct MetricScore {
  Metric metric;
  double of_posterior_mean;        // metric at the posterior-mean theta
  double posterior_mean_of_metric;  // mean of per-sample metric values
  std::vector<double> per_sample;
};

struct ModelScore {
  std::string model;
  std::vector<MetricScore> metrics;
  CoverageResult coverage;
  // Brier at the posterior mean never exceeds the posterior mean of Brier.
  bool jensen_ok = true;
};

struct ScoreReport {
  std::vector<ModelScore> models;  // one, or two for a paired comparison
  std::vector<PairedProbability> comparisons;  // per metric, models[0] vs models[1]
  std::string design;
  std::uint64_t seed = 0;
  int heldout_cells = 0;
  long heldout_trees = 0;
  std::vector<std::string> warnings;
};

ModelScore score_model(const std::string& name, const HeldoutSet& heldout, const PosteriorSamples& samples,
                       const ScoreOptions& options);
// Throws InvalidArgument when the two sample sets differ in K.
ScoreReport compare_models(const HeldoutSet& heldout, const std::string& name_a, const PosteriorSamples& a,
                           const std::string& name_b, const PosteriorSamples& b, const ScoreOptions& options);

void write_report_text(std::ostream& out, const ScoreReport& report);
// Long format: section,metric,model,statistic,value
void write_report_csv(const ScoreReport& report, const std::string& path);

}  // namespace gridcomp
