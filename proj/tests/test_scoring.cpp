#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "gridcomp/error.hpp"
#include "gridcomp/scoring.hpp"
#include "helpers.hpp"

using namespace gridcomp;

namespace {

HeldoutSet one_cell(std::vector<int> counts) {
  HeldoutSet h;
  h.num_taxa = static_cast<int>(counts.size());
  h.cells.push_back({0, std::move(counts)});
  return h;
}

RowMatrix row(std::vector<double> v) {
  RowMatrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t p = 0; p < v.size(); ++p) m(0, static_cast<Eigen::Index>(p)) = v[p];
  return m;
}

// Naive reimplementations that expand counts into individual trees.
double naive_brier(const HeldoutSet& h, const RowMatrix& theta) {
  double sum = 0.0;
  long n = 0;
  for (const auto& c : h.cells)
    for (int q = 0; q < h.num_taxa; ++q)
      for (int t = 0; t < c.counts[q]; ++t) {
        ++n;
        for (int p = 0; p < h.num_taxa; ++p) {
          const double d = (p == q ? 1.0 : 0.0) - theta(c.cell, p);
          sum += d * d;
        }
      }
  return sum / n;
}

double naive_nlpd(const HeldoutSet& h, const RowMatrix& theta, double floor) {
  double sum = 0.0;
  for (const auto& c : h.cells) {
    int n = 0;
    double lp = 0.0;
    for (int p = 0; p < h.num_taxa; ++p) {
      n += c.counts[p];
      const double t = theta(c.cell, p) == 0.0 ? floor : theta(c.cell, p);
      lp += c.counts[p] * std::log(t) - std::lgamma(c.counts[p] + 1.0);
    }
    sum -= lp + std::lgamma(n + 1.0);
  }
  return sum;
}

std::pair<double, double> naive_rmspe_mae(const HeldoutSet& h, const RowMatrix& theta) {
  double sq = 0.0;
  double ab = 0.0;
  long n = 0;
  for (const auto& c : h.cells) {
    int ni = 0;
    for (int v : c.counts) ni += v;
    n += ni;
    for (int p = 0; p < h.num_taxa; ++p) {
      const double d = static_cast<double>(c.counts[p]) / ni - theta(c.cell, p);
      sq += ni * d * d;
      ab += ni * std::abs(d);
    }
  }
  const double denom = static_cast<double>(h.num_taxa) * n;
  return {std::sqrt(sq / denom), ab / denom};
}

void random_fixture(int m, int P, std::uint64_t seed, HeldoutSet& h, RowMatrix& theta) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, 12);
  h = HeldoutSet{};
  h.num_taxa = P;
  theta.resize(m, P);
  for (int i = 0; i < m; ++i) {
    double total = 0.0;
    for (int p = 0; p < P; ++p) total += theta(i, p) = u(rng);
    theta.row(i) /= total;
    if (i % 3 == 1) continue;
    std::vector<int> c(static_cast<std::size_t>(P));
    for (auto& v : c) v = count(rng);
    c[0] += 1;
    h.cells.push_back({i, c});
  }
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

PosteriorSamples constant_samples(const RowMatrix& theta, int K, int nx, int ny) {
  PosteriorSamples s;
  s.grid = build_grid(nx, ny, 0);
  for (int p = 0; p < theta.cols(); ++p) s.taxa.push_back("t" + std::to_string(p));
  for (int k = 0; k < K; ++k) s.append(theta);
  return s;
}

}  // namespace

TEST_CASE("brier examples") {
  CHECK(brier(one_cell({1, 0}), row({1.0, 0.0})) == 0.0);
  CHECK(brier(one_cell({1, 0}), row({0.5, 0.5})) == doctest::Approx(0.5));
  // Three trees: two of taxon 1 and one of taxon 2 at (0.7, 0.2, 0.1).
  const double hand = (2.0 * (0.09 + 0.04 + 0.01) + (0.49 + 0.64 + 0.01)) / 3.0;
  CHECK(std::abs(brier(one_cell({2, 1, 0}), row({0.7, 0.2, 0.1})) - hand) < 1e-12);
}

TEST_CASE("negative log predictive density examples") {
  CHECK(neg_log_predictive_density(one_cell({1, 0}), row({1.0, 0.0})) == 0.0);
  CHECK(neg_log_predictive_density(one_cell({1, 0}), row({0.0, 1.0})) == doctest::Approx(-std::log(1e-5)));
  CHECK(neg_log_predictive_density(one_cell({1, 0}), row({0.0, 1.0})) == doctest::Approx(11.5129).epsilon(1e-5));
  CHECK(neg_log_predictive_density(one_cell({1, 1}), row({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  CHECK(neg_log_predictive_density(one_cell({1, 0}), row({0.0, 1.0}), 1e-3) == doctest::Approx(-std::log(1e-3)));
}

TEST_CASE("rmspe and mae examples") {
  const HeldoutSet h = one_cell({2, 0});
  CHECK(weighted_rmspe(h, row({1.0, 0.0})) == 0.0);
  CHECK(weighted_mae(h, row({1.0, 0.0})) == 0.0);
  CHECK(weighted_mae(h, row({0.5, 0.5})) == doctest::Approx(0.5));
  CHECK(weighted_rmspe(h, row({0.5, 0.5})) == doctest::Approx(0.5));
}

TEST_CASE("metrics agree with brute-force implementations on random fixtures") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    HeldoutSet h;
    RowMatrix theta;
    random_fixture(15, 2 + static_cast<int>(seed % 4), seed, h, theta);
    if (seed % 5 == 0) theta(h.cells[0].cell, 1) = 0.0;
    CHECK(close_rel(brier(h, theta), naive_brier(h, theta), 1e-10));
    CHECK(close_rel(neg_log_predictive_density(h, theta), naive_nlpd(h, theta, 1e-5), 1e-10));
    const auto [rmspe, mae] = naive_rmspe_mae(h, theta);
    CHECK(close_rel(weighted_rmspe(h, theta), rmspe, 1e-10));
    CHECK(close_rel(weighted_mae(h, theta), mae, 1e-10));
  }
}

TEST_CASE("metrics are invariant to a consistent taxon relabeling") {
  HeldoutSet h;
  RowMatrix theta;
  random_fixture(10, 4, 77, h, theta);
  const int perm[] = {2, 0, 3, 1};
  HeldoutSet hp = h;
  RowMatrix tp(theta.rows(), theta.cols());
  for (std::size_t c = 0; c < h.cells.size(); ++c)
    for (int p = 0; p < 4; ++p) hp.cells[c].counts[perm[p]] = h.cells[c].counts[p];
  for (int p = 0; p < 4; ++p) tp.col(perm[p]) = theta.col(p);
  for (Metric m : kAllMetrics)
    CHECK(close_rel(evaluate_metric(m, hp, tp), evaluate_metric(m, h, theta), 1e-12));
}

TEST_CASE("metric guards") {
  HeldoutSet empty;
  empty.num_taxa = 2;
  CHECK_THROWS_AS(brier(empty, row({0.5, 0.5})), InvalidArgument);
  HeldoutSet far = one_cell({1, 1});
  far.cells[0].cell = 4;
  CHECK_THROWS_AS(weighted_mae(far, row({0.5, 0.5})), InvalidArgument);
}

TEST_CASE("paired comparison") {
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
  const auto same = compare_metric_samples(a, a);
  CHECK(same.a_lt_b == 0.0);
  CHECK(same.a_le_b == 1.0);
  const std::vector<double> bigger = {2.0, 3.0, 4.0, 5.0, 6.0};
  CHECK(compare_metric_samples(a, bigger).a_lt_b == 1.0);
  // Hand count: 1<3, 2=2, 3>1, 4<9, 5=5 -> two strict, two ties.
  const std::vector<double> mixed = {3.0, 2.0, 1.0, 9.0, 5.0};
  const auto pm = compare_metric_samples(a, mixed);
  CHECK(pm.a_lt_b == doctest::Approx(0.4));
  CHECK(pm.a_le_b == doctest::Approx(0.8));
  CHECK_THROWS_AS(compare_metric_samples(a, std::vector<double>{1.0}), InvalidArgument);
}

TEST_CASE("Jensen ordering of Brier holds on random posterior samples") {
  HeldoutSet h;
  RowMatrix base;
  random_fixture(12, 3, 5, h, base);
  PosteriorSamples s;
  s.grid = build_grid(4, 3, 0);
  s.taxa = {"a", "b", "c"};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 40; ++k) {
    RowMatrix t(12, 3);
    for (int i = 0; i < 12; ++i) {
      double total = 0.0;
      for (int p = 0; p < 3; ++p) total += t(i, p) = u(rng);
      t.row(i) /= total;
    }
    s.append(t);
  }
  ScoreOptions opt;
  opt.min_trees = 1;
  const ModelScore score = score_model("m", h, s, opt);
  CHECK(score.jensen_ok);
  REQUIRE(score.metrics.size() == std::size(kAllMetrics));
  CHECK(score.metrics[0].of_posterior_mean <= score.metrics[0].posterior_mean_of_metric);
  CHECK(score.metrics[0].per_sample.size() == 40);
  const RowMatrix mean = posterior_mean_theta(s);
  CHECK(score.metrics[0].of_posterior_mean == doctest::Approx(brier(h, mean)).epsilon(1e-12));
}

TEST_CASE("interval coverage edge cases") {
  HeldoutSet h;
  h.num_taxa = 2;
  h.cells.push_back({0, {300, 700}});
  h.cells.push_back({1, {20, 30}});
  h.cells.push_back({2, {400, 200}});
  RowMatrix truth(3, 2);
  truth << 0.3, 0.7, 0.4, 0.6, 2.0 / 3.0, 1.0 / 3.0;
  const PosteriorSamples s = constant_samples(truth, 200, 3, 1);

  for (auto method : {IntervalMethod::binomial, IntervalMethod::theta}) {
    const CoverageResult r = interval_coverage(h, s, 0.95, 100, method, 3);
    CHECK_FALSE(r.empty);
    CHECK(r.cells == 2);
    CHECK(r.intervals == 4);
    CHECK(r.coverage == 1.0);
    CHECK_FALSE(r.low_k);
  }
  const CoverageResult theta_only = interval_coverage(h, s, 0.95, 100, IntervalMethod::theta, 3);
  CHECK(theta_only.mean_length == 0.0);

  const CoverageResult none = interval_coverage(h, s, 0.95, 5000);
  CHECK(none.empty);

  const PosteriorSamples single = constant_samples(truth, 1, 3, 1);
  const CoverageResult one = interval_coverage(h, single, 0.95, 100);
  CHECK(one.low_k);
  CHECK(one.mean_length == 0.0);
  CHECK(interval_coverage(h, constant_samples(truth, 39, 3, 1), 0.95, 100).low_k);
  CHECK_FALSE(interval_coverage(h, constant_samples(truth, 40, 3, 1), 0.95, 100).low_k);
}

TEST_CASE("binomial intervals are calibrated when the model is correct") {
  const int m = 400;
  const int n = 100;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  RowMatrix truth(m, 2);
  HeldoutSet h;
  h.num_taxa = 2;
  for (int i = 0; i < m; ++i) {
    truth(i, 0) = u(rng);
    truth(i, 1) = 1.0 - truth(i, 0);
    const int y = std::binomial_distribution<int>(n, truth(i, 0))(rng);
    h.cells.push_back({i, {y, n - y}});
  }
  const CoverageResult r = interval_coverage(h, constant_samples(truth, 400, 20, 20), 0.95, 50);
  CHECK(r.cells == m);
  CHECK(r.coverage == doctest::Approx(0.95).epsilon(0.03 / 0.95));
}

TEST_CASE("holdout splits") {
  const auto grid = build_grid(4, 4, 1);
  Dataset d;
  d.taxa = TaxonRegistry({"a", "b"});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if ((x + y) % 5 != 0) d.cells.push_back({grid.interior_index(x, y), {x + 1, y + 2}});
  d.townships.push_back({"T", {0, 1}, normalize_township(grid, "T", std::vector<RawOverlap>{{grid.interior_index(0, 0), 1.0}})});
  const long total = d.gridded_trees();

  SUBCASE("fraction zero is rejected") {
    HoldoutDesign design;
    design.fraction = 0.0;
    CHECK_THROWS_AS(split_dataset(d, grid, design), InvalidArgument);
    design.fraction = 0.01;
    CHECK_THROWS_AS(split_dataset(d, grid, design), InvalidArgument);
  }
  SUBCASE("full cells inside a subregion") {
    HoldoutDesign design;
    design.region = {2, INT_MAX, 2, INT_MAX};
    design.fraction = 1.0;
    design.seed = 3;
    const DataSplit split = split_dataset(d, grid, design);
    // (2,2) and (3,3) carry data; (3,2) and (2,3) were left empty.
    CHECK(split.heldout.cells.size() == 2);
    for (const auto& c : split.heldout.cells) {
      const int x = c.cell % 4;
      const int y = c.cell / 4;
      CHECK(x >= 2);
      CHECK(y >= 2);
    }
    CHECK(split.training.gridded_trees() + split.heldout.total_trees() == total);
    CHECK(split.training.townships.size() == 1);
    CHECK(split_dataset(d, grid, design).heldout.cells.front().cell == split.heldout.cells.front().cell);
    CHECK_NOTHROW(split.training.validate(grid));
  }
  SUBCASE("per-tree split") {
    HoldoutDesign design;
    design.kind = HoldoutKind::per_tree;
    design.fraction = 0.5;
    const DataSplit split = split_dataset(d, grid, design);
    CHECK(split.heldout.total_trees() == std::llround(0.5 * total));
    CHECK(split.training.gridded_trees() + split.heldout.total_trees() == total);
    CHECK(split.training.township_trees() == 2);
    for (std::size_t i = 1; i < split.heldout.cells.size(); ++i)
      CHECK(split.heldout.cells[i - 1].cell < split.heldout.cells[i].cell);
  }
  SUBCASE("2x2 per-tree smoke with all metrics finite") {
    const auto g2 = build_grid(2, 2, 0);
    Dataset small;
    small.taxa = TaxonRegistry({"a", "b"});
    for (int i = 0; i < 4; ++i) small.cells.push_back({i, {i + 1, 4 - i}});
    HoldoutDesign design;
    design.kind = HoldoutKind::per_tree;
    design.fraction = 0.5;
    const DataSplit split = split_dataset(small, g2, design);
    RowMatrix half = RowMatrix::Constant(4, 2, 0.5);
    for (Metric m : kAllMetrics) CHECK(std::isfinite(evaluate_metric(m, split.heldout, half)));
  }
  CHECK(parse_holdout_kind("cells") == HoldoutKind::full_cell);
  CHECK(parse_holdout_kind("per_tree") == HoldoutKind::per_tree);
  CHECK_THROWS(parse_holdout_kind("nope"));
}

TEST_CASE("compare_models and reports") {
  HeldoutSet h;
  RowMatrix base;
  random_fixture(6, 2, 8, h, base);
  const PosteriorSamples a = constant_samples(base, 50, 3, 2);
  RowMatrix flat = RowMatrix::Constant(6, 2, 0.5);
  const PosteriorSamples b = constant_samples(flat, 50, 3, 2);
  ScoreOptions opt;
  opt.min_trees = 1;
  ScoreReport report = compare_models(h, "car", a, "spde", b, opt);
  report.design = "full_cell";
  REQUIRE(report.models.size() == 2);
  REQUIRE(report.comparisons.size() == std::size(kAllMetrics));
  for (const auto& c : report.comparisons) {
    CHECK((c.a_lt_b == 0.0 || c.a_lt_b == 1.0));
    CHECK(c.a_le_b >= c.a_lt_b);
  }
  CHECK_THROWS_AS(compare_models(h, "car", a, "spde", constant_samples(flat, 49, 3, 2), opt), InvalidArgument);

  std::ostringstream text;
  write_report_text(text, report);
  CHECK(text.str().find("of posterior mean") != std::string::npos);
  CHECK(text.str().find("posterior mean of metric") != std::string::npos);
  CHECK(text.str().find("P(car<=spde)") != std::string::npos);

  testing::TempDir dir;
  write_report_csv(report, dir.file("r.csv"));
  std::ifstream in(dir.file("r.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "section,metric,model,statistic,value");
  std::string line;
  bool saw = false;
  while (std::getline(in, line)) saw |= line.find("p_a_le_b") != std::string::npos;
  CHECK(saw);
}
