#include "gridcomp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "gridcomp/error.hpp"
#include "gridcomp/random.hpp"
#include "parallel.hpp"

namespace gridcomp {

int HeldoutCell::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

long HeldoutSet::total_trees() const {
  long n = 0;
  for (const auto& c : cells) n += c.total();
  return n;
}

const char* to_string(HoldoutKind kind) { return kind == HoldoutKind::full_cell ? "full_cell" : "per_tree"; }

HoldoutKind parse_holdout_kind(const std::string& text) {
  if (text == "full_cell" || text == "cells") return HoldoutKind::full_cell;
  if (text == "per_tree" || text == "trees") return HoldoutKind::per_tree;
  throw InvalidArgument("unknown holdout kind '" + text + "' (expected full_cell or per_tree)");
}

namespace {

// Chooses `count` of `n` indices uniformly without replacement; returned in
// draw order.
std::vector<std::size_t> choose_subset(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> index(n);
  std::iota(index.begin(), index.end(), std::size_t{0});
  StreamRng rng = make_stream(seed, Stream::holdout, 0, 0);
  for (std::size_t i = 0; i < count; ++i) {
    boost::random::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(index[i], index[pick(rng)]);
  }
  index.resize(count);
  return index;
}

void check_prediction(const HeldoutSet& heldout, const ThetaRef& theta) {
  if (theta.cols() != heldout.num_taxa) throw InvalidArgument("prediction taxa differ from held-out taxa");
  for (const auto& c : heldout.cells) {
    if (c.cell < 0 || c.cell >= theta.rows())
      throw InvalidArgument("no prediction for held-out cell " + std::to_string(c.cell));
    if (static_cast<int>(c.counts.size()) != heldout.num_taxa)
      throw InvalidArgument("held-out count vector has the wrong length");
  }
}

double positive_total(const HeldoutSet& heldout) {
  const long n = heldout.total_trees();
  if (n <= 0) throw InvalidArgument("held-out set contains no trees");
  return static_cast<double>(n);
}

}  // namespace

DataSplit split_dataset(const Dataset& data, const GridSpec& grid, const HoldoutDesign& design) {
  if (!(design.fraction > 0.0 && design.fraction <= 1.0))
    throw InvalidArgument("holdout fraction must lie in (0, 1]");
  DataSplit split;
  split.training.taxa = data.taxa;
  split.training.townships = data.townships;
  split.heldout.num_taxa = data.num_taxa();
  const int P = data.num_taxa();

  if (design.kind == HoldoutKind::full_cell) {
    std::vector<std::size_t> eligible;
    for (std::size_t r = 0; r < data.cells.size(); ++r) {
      const auto [x, y] = grid.interior_coords(data.cells[r].cell);
      if (data.cells[r].total() > 0 && design.region.contains(x, y)) eligible.push_back(r);
    }
    const auto count = static_cast<std::size_t>(std::llround(design.fraction * static_cast<double>(eligible.size())));
    if (count == 0) throw InvalidArgument("holdout design selects no cells with data");
    std::vector<bool> held(data.cells.size(), false);
    for (std::size_t i : choose_subset(eligible.size(), count, design.seed)) held[eligible[i]] = true;
    for (std::size_t r = 0; r < data.cells.size(); ++r) {
      if (held[r])
        split.heldout.cells.push_back({grid.output_index(data.cells[r].cell), data.cells[r].counts});
      else
        split.training.cells.push_back(data.cells[r]);
    }
  } else {
    std::vector<std::pair<std::size_t, int>> trees;  // (record, taxon)
    for (std::size_t r = 0; r < data.cells.size(); ++r)
      for (int p = 0; p < P; ++p) trees.insert(trees.end(), data.cells[r].counts[p], {r, p});
    const auto count = static_cast<std::size_t>(std::llround(design.fraction * static_cast<double>(trees.size())));
    if (count == 0) throw InvalidArgument("holdout design selects no trees");
    std::vector<std::vector<int>> held(data.cells.size(), std::vector<int>(P, 0));
    for (std::size_t i : choose_subset(trees.size(), count, design.seed)) ++held[trees[i].first][trees[i].second];
    for (std::size_t r = 0; r < data.cells.size(); ++r) {
      CellCount train = data.cells[r];
      for (int p = 0; p < P; ++p) train.counts[p] -= held[r][p];
      if (std::any_of(held[r].begin(), held[r].end(), [](int v) { return v > 0; }))
        split.heldout.cells.push_back({grid.output_index(data.cells[r].cell), held[r]});
      if (train.total() > 0) split.training.cells.push_back(std::move(train));
    }
  }
  std::sort(split.heldout.cells.begin(), split.heldout.cells.end(),
            [](const HeldoutCell& a, const HeldoutCell& b) { return a.cell < b.cell; });
  return split;
}

HeldoutSet make_heldout(const GridSpec& grid, const std::vector<CellCount>& cells, int num_taxa) {
  HeldoutSet h;
  h.num_taxa = num_taxa;
  for (const auto& c : cells)
    if (c.total() > 0) h.cells.push_back({grid.output_index(c.cell), c.counts});
  std::sort(h.cells.begin(), h.cells.end(), [](const HeldoutCell& a, const HeldoutCell& b) { return a.cell < b.cell; });
  return h;
}

double brier(const HeldoutSet& heldout, const ThetaRef& theta) {
  check_prediction(heldout, theta);
  const double n = positive_total(heldout);
  double sum = 0.0;
  for (const auto& c : heldout.cells) {
    const double ni = c.total();
    for (int p = 0; p < heldout.num_taxa; ++p) {
      const double t = theta(c.cell, p);
      const double y = c.counts[p];
      sum += y * (1.0 - t) * (1.0 - t) + (ni - y) * t * t;
    }
  }
  return sum / n;
}

double neg_log_predictive_density(const HeldoutSet& heldout, const ThetaRef& theta, double floor) {
  check_prediction(heldout, theta);
  double sum = 0.0;
  std::vector<double> floored(static_cast<std::size_t>(heldout.num_taxa));
  for (const auto& c : heldout.cells) {
    for (int p = 0; p < heldout.num_taxa; ++p) {
      const double t = theta(c.cell, p);
      floored[p] = t == 0.0 ? floor : t;
    }
    sum -= multinomial_log_pmf(c.counts, floored);
  }
  return sum;
}

double weighted_rmspe(const HeldoutSet& heldout, const ThetaRef& theta) {
  check_prediction(heldout, theta);
  const double n = positive_total(heldout);
  double sum = 0.0;
  for (const auto& c : heldout.cells) {
    const double ni = c.total();
    if (ni == 0) continue;
    for (int p = 0; p < heldout.num_taxa; ++p) {
      const double d = c.counts[p] / ni - theta(c.cell, p);
      sum += ni * d * d;
    }
  }
  return std::sqrt(sum / (heldout.num_taxa * n));
}

double weighted_mae(const HeldoutSet& heldout, const ThetaRef& theta) {
  check_prediction(heldout, theta);
  const double n = positive_total(heldout);
  double sum = 0.0;
  for (const auto& c : heldout.cells) {
    const double ni = c.total();
    if (ni == 0) continue;
    for (int p = 0; p < heldout.num_taxa; ++p) sum += ni * std::abs(c.counts[p] / ni - theta(c.cell, p));
  }
  return sum / (heldout.num_taxa * n);
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::brier: return "brier";
    case Metric::neg_log_density: return "neg_log_density";
    case Metric::rmspe: return "weighted_rmspe";
    case Metric::mae: return "weighted_mae";
  }
  return "?";
}

double evaluate_metric(Metric metric, const HeldoutSet& heldout, const ThetaRef& theta, double floor) {
  switch (metric) {
    case Metric::brier: return brier(heldout, theta);
    case Metric::neg_log_density: return neg_log_predictive_density(heldout, theta, floor);
    case Metric::rmspe: return weighted_rmspe(heldout, theta);
    case Metric::mae: return weighted_mae(heldout, theta);
  }
  throw InvalidArgument("unknown metric");
}

std::vector<double> posterior_metric_values(Metric metric, const HeldoutSet& heldout, const PosteriorSamples& samples,
                                            double floor) {
  std::vector<double> values(static_cast<std::size_t>(samples.num_samples));
  detail::parallel_for(samples.num_samples,
                       [&](int k) { values[k] = evaluate_metric(metric, heldout, samples.sample(k), floor); });
  return values;
}

PairedProbability compare_metric_samples(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw InvalidArgument("paired comparison needs equal sample counts (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  if (a.empty()) throw InvalidArgument("paired comparison needs at least one sample");
  std::size_t lt = 0;
  std::size_t le = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    lt += a[k] < b[k];
    le += a[k] <= b[k];
  }
  const auto K = static_cast<double>(a.size());
  return {static_cast<double>(lt) / K, static_cast<double>(le) / K};
}

RowMatrix posterior_mean_theta(const PosteriorSamples& samples) {
  if (samples.num_samples < 1) throw InvalidArgument("no posterior samples");
  RowMatrix mean = RowMatrix::Zero(samples.num_cells(), samples.num_taxa());
  for (int k = 0; k < samples.num_samples; ++k) mean += samples.sample(k);
  return mean / static_cast<double>(samples.num_samples);
}

const char* to_string(IntervalMethod method) { return method == IntervalMethod::binomial ? "binomial" : "theta"; }

IntervalMethod parse_interval_method(const std::string& text) {
  if (text == "binomial") return IntervalMethod::binomial;
  if (text == "theta") return IntervalMethod::theta;
  throw InvalidArgument("unknown interval method '" + text + "' (expected binomial or theta)");
}

CoverageResult interval_coverage(const HeldoutSet& heldout, const PosteriorSamples& samples, double level,
                                 int min_trees, IntervalMethod method, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("interval level must lie in (0, 1)");
  if (samples.num_samples < 1) throw InvalidArgument("no posterior samples");
  check_prediction(heldout, samples.sample(0));
  const int K = samples.num_samples;
  const int P = heldout.num_taxa;
  const double tail = 0.5 * (1.0 - level);

  std::vector<std::size_t> qualifying;
  for (std::size_t h = 0; h < heldout.cells.size(); ++h)
    if (heldout.cells[h].total() >= min_trees) qualifying.push_back(h);

  CoverageResult result;
  result.low_k = K < static_cast<int>(std::ceil(1.0 / tail));
  if (qualifying.empty()) return result;

  const auto n_int = qualifying.size() * static_cast<std::size_t>(P);
  std::vector<double> lengths(n_int);
  std::vector<char> covered(n_int);
  detail::parallel_for(static_cast<int>(n_int), [&](int idx) {
    const auto& c = heldout.cells[qualifying[static_cast<std::size_t>(idx / P)]];
    const int p = idx % P;
    const int n = c.total();
    std::vector<double> draws(static_cast<std::size_t>(K));
    StreamRng rng = make_stream(seed, Stream::interval, static_cast<std::uint64_t>(c.cell), static_cast<std::uint64_t>(p));
    for (int k = 0; k < K; ++k) {
      const double t = std::clamp(samples.at(k, c.cell, p), 0.0, 1.0);
      if (method == IntervalMethod::binomial) {
        boost::random::binomial_distribution<int, double> binom(n, t);
        draws[k] = static_cast<double>(binom(rng)) / n;
      } else {
        draws[k] = t;
      }
    }
    std::sort(draws.begin(), draws.end());
    const double lo = sorted_quantile(draws, tail);
    const double hi = sorted_quantile(draws, 1.0 - tail);
    const double observed = static_cast<double>(c.counts[p]) / n;
    lengths[idx] = hi - lo;
    covered[idx] = observed >= lo && observed <= hi;
  });

  result.empty = false;
  result.cells = static_cast<int>(qualifying.size());
  result.intervals = static_cast<int>(n_int);
  result.coverage = static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / static_cast<double>(n_int);
  result.mean_length = std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(n_int);
  std::sort(lengths.begin(), lengths.end());
  result.median_length = sorted_quantile(lengths, 0.5);
  return result;
}

ModelScore score_model(const std::string& name, const HeldoutSet& heldout, const PosteriorSamples& samples,
                       const ScoreOptions& options) {
  ModelScore score;
  score.model = name;
  const RowMatrix mean = posterior_mean_theta(samples);
  for (Metric m : kAllMetrics) {
    MetricScore s;
    s.metric = m;
    s.of_posterior_mean = evaluate_metric(m, heldout, mean, options.floor);
    s.per_sample = posterior_metric_values(m, heldout, samples, options.floor);
    s.posterior_mean_of_metric =
        std::accumulate(s.per_sample.begin(), s.per_sample.end(), 0.0) / static_cast<double>(s.per_sample.size());
    if (m == Metric::brier)
      score.jensen_ok = s.of_posterior_mean <= s.posterior_mean_of_metric * (1.0 + 1e-12) + 1e-15;
    score.metrics.push_back(std::move(s));
  }
  score.coverage =
      interval_coverage(heldout, samples, options.level, options.min_trees, options.interval_method, options.seed);
  return score;
}

namespace {

void add_common_warnings(ScoreReport& report, const ModelScore& score) {
  if (score.coverage.empty)
    report.warnings.push_back(score.model + ": no held-out cell has enough trees for interval coverage");
  if (score.coverage.low_k)
    report.warnings.push_back(score.model + ": too few posterior samples to resolve the interval tails");
  if (!score.jensen_ok)
    report.warnings.push_back(score.model + ": Brier at the posterior mean exceeds the posterior mean of Brier");
}

}  // namespace

ScoreReport compare_models(const HeldoutSet& heldout, const std::string& name_a, const PosteriorSamples& a,
                           const std::string& name_b, const PosteriorSamples& b, const ScoreOptions& options) {
  if (a.num_samples != b.num_samples)
    throw InvalidArgument("models have different numbers of posterior samples (" + std::to_string(a.num_samples) +
                          " vs " + std::to_string(b.num_samples) + ")");
  ScoreReport report;
  report.models.push_back(score_model(name_a, heldout, a, options));
  report.models.push_back(score_model(name_b, heldout, b, options));
  for (std::size_t m = 0; m < report.models[0].metrics.size(); ++m)
    report.comparisons.push_back(
        compare_metric_samples(report.models[0].metrics[m].per_sample, report.models[1].metrics[m].per_sample));
  report.seed = options.seed;
  report.heldout_cells = static_cast<int>(heldout.cells.size());
  report.heldout_trees = heldout.total_trees();
  for (const auto& s : report.models) add_common_warnings(report, s);
  return report;
}

void write_report_text(std::ostream& out, const ScoreReport& report) {
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  if (!report.design.empty()) out << "design: " << report.design << '\n';
  out << "held-out cells: " << report.heldout_cells << ", held-out trees: " << report.heldout_trees
      << ", seed: " << report.seed << "\n\n";

  out << std::left << std::setw(18) << "metric";
  for (const auto& m : report.models)
    out << std::setw(26) << (m.model + ": of posterior mean") << std::setw(28) << (m.model + ": posterior mean of metric");
  if (report.models.size() == 2) {
    const std::string a = report.models[0].model;
    const std::string b = report.models[1].model;
    out << std::setw(16) << ("P(" + a + "<" + b + ")") << std::setw(16) << ("P(" + a + "<=" + b + ")");
  }
  out << '\n' << std::setprecision(6);
  for (std::size_t i = 0; i < std::size(kAllMetrics); ++i) {
    out << std::setw(18) << to_string(kAllMetrics[i]);
    for (const auto& m : report.models)
      out << std::setw(26) << m.metrics[i].of_posterior_mean << std::setw(28) << m.metrics[i].posterior_mean_of_metric;
    if (i < report.comparisons.size())
      out << std::setw(16) << report.comparisons[i].a_lt_b << std::setw(16) << report.comparisons[i].a_le_b;
    out << '\n';
  }

  out << '\n' << std::setw(18) << "interval";
  for (const auto& m : report.models) out << std::setw(54) << (m.model + ": coverage / mean length / median length");
  out << '\n' << std::setw(18) << "";
  for (const auto& m : report.models) {
    std::ostringstream cell;
    cell << std::setprecision(4);
    if (m.coverage.empty)
      cell << "no qualifying cells";
    else
      cell << m.coverage.coverage << " / " << m.coverage.mean_length << " / " << m.coverage.median_length << "  ("
           << m.coverage.cells << " cells)";
    out << std::setw(54) << cell.str();
  }
  out << '\n';
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  out.flags(old_flags);
  out.precision(old_precision);
}

void write_report_csv(const ScoreReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << std::setprecision(17);
  out << "section,metric,model,statistic,value\n";
  out << "design,seed,,," << report.seed << '\n';
  out << "design,heldout_cells,,," << report.heldout_cells << '\n';
  out << "design,heldout_trees,,," << report.heldout_trees << '\n';
  for (const auto& m : report.models) {
    for (const auto& s : m.metrics) {
      out << "metric," << to_string(s.metric) << ',' << m.model << ",of_posterior_mean," << s.of_posterior_mean << '\n';
      out << "metric," << to_string(s.metric) << ',' << m.model << ",posterior_mean_of_metric,"
          << s.posterior_mean_of_metric << '\n';
    }
    if (!m.coverage.empty) {
      out << "interval,coverage," << m.model << ",value," << m.coverage.coverage << '\n';
      out << "interval,mean_length," << m.model << ",value," << m.coverage.mean_length << '\n';
      out << "interval,median_length," << m.model << ",value," << m.coverage.median_length << '\n';
      out << "interval,cells," << m.model << ",value," << m.coverage.cells << '\n';
    } else {
      out << "interval,coverage," << m.model << ",value,\n";
    }
  }
  if (report.models.size() == 2) {
    const std::string pair = report.models[0].model + "_vs_" + report.models[1].model;
    for (std::size_t i = 0; i < report.comparisons.size(); ++i) {
      out << "comparison," << to_string(kAllMetrics[i]) << ',' << pair << ",p_a_lt_b," << report.comparisons[i].a_lt_b
          << '\n';
      out << "comparison," << to_string(kAllMetrics[i]) << ',' << pair << ",p_a_le_b," << report.comparisons[i].a_le_b
          << '\n';
    }
  }
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace gridcomp
