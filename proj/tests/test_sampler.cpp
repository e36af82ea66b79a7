#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "gridcomp/error.hpp"
#include "gridcomp/sampler.hpp"

using namespace gridcomp;

namespace {

struct Tree {
  int cell;
  double w;
};

// Sufficient statistics for a single taxon from explicit per-tree latent values.
SufficientStats stats_from(int m, const std::vector<Tree>& trees) {
  SufficientStats s{Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, 1)};
  for (const auto& t : trees) {
    s.tree_count[t.cell] += 1.0;
    s.w_sum(t.cell, 0) += t.w;
  }
  return s;
}

// log N(w; mu 1, I + B Sigma B') for per-tree latent values, Sigma = Q_p^-1.
double dense_tree_marginal(const Eigen::MatrixXd& qp, double mu, const std::vector<Tree>& trees) {
  const Eigen::MatrixXd sigma = qp.inverse();
  const auto n = static_cast<Eigen::Index>(trees.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd r(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    r[a] = trees[a].w - mu;
    for (Eigen::Index b = 0; b < n; ++b) c(a, b) += sigma(trees[a].cell, trees[b].cell);
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
  return -0.5 * std::log(c.determinant()) - 0.5 * r.dot(ldlt.solve(r));
}

Dataset small_dataset(const GridSpec& grid) {
  Dataset d;
  d.taxa = TaxonRegistry({"a", "b", "c"});
  d.cells.push_back({grid.interior_index(0, 0), {5, 2, 1}});
  d.cells.push_back({grid.interior_index(1, 0), {1, 4, 0}});
  d.cells.push_back({grid.interior_index(1, 1), {0, 1, 6}});
  return d;
}

SamplerConfig short_config(PrecisionKind kind) {
  SamplerConfig c;
  c.model = kind;
  c.n_iter = 10;
  c.burn_in = 0;
  c.n_retained = 5;
  c.t_mc = 2000;
  c.seed = 42;
  return c;
}

}  // namespace

TEST_CASE("SamplerConfig validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.thinning() == 500);
  CHECK(c.is_retained(25500));
  CHECK_FALSE(c.is_retained(25000));
  CHECK(c.is_retained(150000));
  c.n_retained = 7;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SamplerConfig{};
  c.burn_in = c.n_iter;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SamplerConfig{};
  c.init_sigma = 2000.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("gibbs_alpha conditional means") {
  SUBCASE("2-cell CAR") {
    const auto graph = build_neighbor_graph(build_grid(2, 1, 0), NeighborOrder::cardinal);
    const PrecisionStructure s(PrecisionKind::car, graph);
    FieldConditional f(s);
    const Eigen::Vector2d count(1.0, 0.0);
    f.update(s, 1.0, 1.0, count);
    const Eigen::VectorXd mean = f.mean(Eigen::Vector2d(2.0, 0.0), 0.0);
    CHECK(mean[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(mean[1] == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("1-cell conjugate normal") {
    const auto graph = build_neighbor_graph(build_grid(1, 1, 0), NeighborOrder::cardinal);
    const PrecisionStructure s(PrecisionKind::iid, graph);
    const double tau = 2.5;
    const int n = 7;
    const double wbar = 0.8;
    SufficientStats stats{Eigen::VectorXd::Constant(1, n), Eigen::MatrixXd::Constant(1, 1, n * wbar)};
    StreamRng rng = make_stream(1, Stream::alpha, 0, 0);
    const TaxonHyper h{1.0 / std::sqrt(tau), 10.0, 0.0};
    double s1 = 0.0;
    double s2 = 0.0;
    const int draws = 40000;
    FieldConditional f(s);
    f.update(s, 1.0 / tau, 10.0, stats.tree_count);
    for (int i = 0; i < draws; ++i) {
      const double x = f.draw(stats.w_sum.col(0), 0.0, rng)[0];
      s1 += x;
      s2 += x * x;
    }
    const double mean = s1 / draws;
    const double var = s2 / draws - mean * mean;
    const double expected_var = 1.0 / (n + tau);
    CHECK(std::abs(mean - n * wbar / (n + tau)) < 5.0 * std::sqrt(expected_var / draws));
    CHECK(var == doctest::Approx(expected_var).epsilon(0.03));
    CHECK(std::isfinite(gibbs_alpha(s, h, stats, 0, rng)[0]));
  }
  SUBCASE("SPDE without data centers on mu") {
    const auto graph = build_neighbor_graph(build_grid(3, 3, 0), NeighborOrder::extended);
    const PrecisionStructure s(PrecisionKind::spde, graph);
    FieldConditional f(s);
    f.update(s, 0.5, 2.0, Eigen::VectorXd::Zero(9));
    const Eigen::VectorXd mean = f.mean(Eigen::VectorXd::Zero(9), 1.7);
    CHECK((mean.array() - 1.7).abs().maxCoeff() < 1e-10);
  }
  SUBCASE("CAR without data is not positive definite") {
    const auto graph = build_neighbor_graph(build_grid(3, 2, 0), NeighborOrder::cardinal);
    const PrecisionStructure s(PrecisionKind::car, graph);
    SufficientStats stats{Eigen::VectorXd::Zero(6), Eigen::MatrixXd::Zero(6, 1)};
    StreamRng rng = make_stream(1, Stream::alpha, 0, 0);
    CHECK_THROWS_WITH_AS(gibbs_alpha(s, TaxonHyper{}, stats, 0, rng), doctest::Contains("at least one cell"),
                         NumericalError);
  }
}

TEST_CASE("marginal_logdensity_w matches a dense tree-level oracle for SPDE 2x2") {
  const auto grid = build_grid(2, 2, 0);
  const auto graph = build_neighbor_graph(grid, NeighborOrder::extended);
  const PrecisionStructure s(PrecisionKind::spde, graph);
  const std::vector<Tree> trees = {{0, 0.3}, {0, -1.1}, {1, 0.7}, {3, 2.0}, {3, 0.1}, {3, -0.4}};
  const SufficientStats stats = stats_from(4, trees);
  const std::vector<TaxonHyper> settings = {{1.0, 1.0, 0.0}, {0.4, 3.0, 0.5}, {2.5, 0.3, -1.2}, {0.8, 12.0, 2.0}};
  double offset = 0.0;
  for (std::size_t k = 0; k < settings.size(); ++k) {
    const auto& h = settings[k];
    const double ours = marginal_logdensity_w(s, h, stats, 0);
    const double oracle = dense_tree_marginal(Eigen::MatrixXd(s.effective(h.sigma * h.sigma, h.rho)), h.mu, trees);
    if (k == 0) offset = ours - oracle;
    CHECK(std::abs(ours - oracle - offset) < 1e-8);
  }
}

TEST_CASE("marginal_logdensity_w density ratios match numerical integration") {
  using boost::math::quadrature::gauss_kronrod;
  SUBCASE("1-cell iid") {
    const auto graph = build_neighbor_graph(build_grid(1, 1, 0), NeighborOrder::cardinal);
    const PrecisionStructure s(PrecisionKind::iid, graph);
    const std::vector<Tree> trees = {{0, 0.9}, {0, 1.4}, {0, -0.2}};
    const SufficientStats stats = stats_from(1, trees);
    auto integral = [&](double sigma2) {
      auto f = [&](double a) {
        double e = -0.5 * a * a / sigma2;
        for (const auto& t : trees) e -= 0.5 * (t.w - a) * (t.w - a);
        return std::exp(e) / std::sqrt(sigma2);
      };
      return gauss_kronrod<double, 61>::integrate(f, -30.0, 30.0, 15, 1e-13);
    };
    const double ours = marginal_logdensity_w(s, {1.0}, stats, 0) - marginal_logdensity_w(s, {std::sqrt(2.0)}, stats, 0);
    CHECK(std::abs(ours - std::log(integral(1.0) / integral(2.0))) < 1e-6);
  }
  SUBCASE("2-cell CAR") {
    const auto graph = build_neighbor_graph(build_grid(2, 1, 0), NeighborOrder::cardinal);
    const PrecisionStructure s(PrecisionKind::car, graph);
    const std::vector<Tree> trees = {{0, 0.5}, {0, 1.5}, {1, -0.3}};
    const SufficientStats stats = stats_from(2, trees);
    // Improper prior: (1/sigma2)^((m-1)/2) exp(-(a1 - a2)^2 / (2 sigma2)).
    auto integral = [&](double sigma2) {
      auto outer = [&](double a1) {
        auto inner = [&](double a2) {
          double e = -0.5 * (a1 - a2) * (a1 - a2) / sigma2;
          for (const auto& t : trees) {
            const double a = t.cell == 0 ? a1 : a2;
            e -= 0.5 * (t.w - a) * (t.w - a);
          }
          return std::exp(e);
        };
        return gauss_kronrod<double, 61>::integrate(inner, -25.0, 25.0, 15, 1e-13);
      };
      return gauss_kronrod<double, 61>::integrate(outer, -25.0, 25.0, 15, 1e-13) / std::sqrt(sigma2);
    };
    const double ours = marginal_logdensity_w(s, {1.0}, stats, 0) - marginal_logdensity_w(s, {std::sqrt(2.0)}, stats, 0);
    CHECK(std::abs(ours - std::log(integral(1.0) / integral(2.0))) < 1e-6);
  }
  SUBCASE("CAR without data depends on sigma only through the rank") {
    const auto graph = build_neighbor_graph(build_grid(3, 3, 0), NeighborOrder::cardinal);
    const PrecisionStructure s(PrecisionKind::car, graph);
    // A = 0 leaves A + Q_p singular, so check the prior term directly.
    const double d = s.log_gdet(2.0, 1.0, 0.0) - s.log_gdet(1.0, 1.0, 0.0);
    CHECK(0.5 * d == doctest::Approx(0.5 * 8.0 * std::log(0.5)));
  }
}

TEST_CASE("log_hyper_prior support") {
  const Hyperpriors priors;
  CHECK(log_hyper_prior(PrecisionKind::car, {1.0}, priors) == doctest::Approx(0.0));
  CHECK(std::isinf(log_hyper_prior(PrecisionKind::car, {1000.5}, priors)));
  CHECK(std::isinf(log_hyper_prior(PrecisionKind::car, {0.0}, priors)));
  CHECK(std::isinf(log_hyper_prior(PrecisionKind::car, {1e-7}, priors)));
  CHECK(std::isinf(log_hyper_prior(PrecisionKind::spde, {1.0, 0.05, 0.0}, priors)));
  CHECK(std::isinf(log_hyper_prior(PrecisionKind::spde, {1.0, 200.0, 0.0}, priors)));
  CHECK(std::isinf(log_hyper_prior(PrecisionKind::spde, {1.0, 2.0, 11.0}, priors)));
  CHECK(log_hyper_prior(PrecisionKind::spde, {2.0, 3.0, -1.0}, priors) == doctest::Approx(std::log(6.0)));
}

TEST_CASE("membership probabilities") {
  Eigen::MatrixXd alpha(2, 1);
  alpha << 0.0, 1.0;
  const Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(1);
  const TownshipOverlap half{"T", {{0, 0.5}, {1, 0.5}}};
  const Eigen::VectorXd p = membership_probabilities(half, alpha, w);
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.6225).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.3775).epsilon(1e-4));

  Eigen::MatrixXd same = Eigen::MatrixXd::Constant(2, 3, 0.4);
  const Eigen::RowVectorXd w3 = (Eigen::RowVectorXd(3) << 1.0, -0.5, 0.2).finished();
  const Eigen::VectorXd ps = membership_probabilities(half, same, w3);
  CHECK(ps[0] == doctest::Approx(0.5));

  const TownshipOverlap point{"T", {{0, 1.0}, {1, 0.0}}};
  const Eigen::VectorXd pp = membership_probabilities(point, alpha, w);
  CHECK(pp[0] == 1.0);
  CHECK(pp[1] == 0.0);

  // Far-away latent values still normalize.
  const Eigen::RowVectorXd far = Eigen::RowVectorXd::Constant(1, 1e3);
  const Eigen::VectorXd pf = membership_probabilities(half, alpha, far);
  CHECK(pf.sum() == doctest::Approx(1.0));
  CHECK(pf[1] > 0.999);

  const Eigen::RowVectorXd bad = Eigen::RowVectorXd::Constant(1, std::nan(""));
  CHECK_THROWS_AS(membership_probabilities(half, alpha, bad), NumericalError);
}

TEST_CASE("update_w respects truncation") {
  const auto grid = build_grid(1, 1, 0);
  SUBCASE("two taxa, observed taxon wins") {
    Dataset d;
    d.taxa = TaxonRegistry({"a", "b"});
    d.cells.push_back({0, {1, 0}});
    const Problem problem(grid, d, PrecisionKind::iid);
    ChainState state = initialize_chain(problem, short_config(PrecisionKind::iid));
    double diff = 0.0;
    for (long it = 1; it <= 2000; ++it) {
      update_w(problem, state, 3, it);
      REQUIRE(argmax_consistent(problem, state));
      diff += state.w(0, 0) - state.w(0, 1);
    }
    CHECK(diff > 0.0);
  }
  SUBCASE("single taxon is untruncated") {
    Dataset d;
    d.taxa = TaxonRegistry({"a"});
    d.cells.push_back({0, {1}});
    const Problem problem(grid, d, PrecisionKind::iid);
    ChainState state = initialize_chain(problem, short_config(PrecisionKind::iid));
    state.alpha(0, 0) = 0.7;
    double s1 = 0.0;
    double s2 = 0.0;
    const int n = 40000;
    for (long it = 1; it <= n; ++it) {
      update_w(problem, state, 3, it);
      s1 += state.w(0, 0);
      s2 += state.w(0, 0) * state.w(0, 0);
    }
    const double mean = s1 / n;
    CHECK(std::abs(mean - 0.7) < 5.0 / std::sqrt(n));
    CHECK(s2 / n - mean * mean == doctest::Approx(1.0).epsilon(0.03));
  }
}

TEST_CASE("AdaptiveProposal adaptation") {
  AdaptiveProposal a(1, 0.44, 0.1);
  for (int i = 0; i < 50; ++i) a.record(true, Eigen::VectorXd::Zero(1), true);
  a.adapt();
  CHECK(a.log_scale == doctest::Approx(std::log(0.1) + 0.56));
  for (int i = 0; i < 50; ++i) a.record(false, Eigen::VectorXd::Zero(1), true);
  a.adapt();
  CHECK(a.log_scale == doctest::Approx(std::log(0.1) + 0.56 - 0.44 / std::sqrt(2.0)));
  a.record(true, Eigen::VectorXd::Zero(1), false);
  CHECK(a.post_proposed == 1);
  CHECK(a.proposed == 101);

  AdaptiveProposal b(2, 0.234, 0.1);
  StreamRng rng = make_stream(4, Stream::hyper, 0, 0);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd v(2);
    const double z = standard_normal(rng);
    v << 3.0 * z, z + 0.1 * standard_normal(rng);
    b.record(i % 4 == 0, v, true);
  }
  b.adapt();
  CHECK(b.shape.determinant() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(b.shape(0, 1) > 0.0);
  const Eigen::VectorXd step = b.propose(Eigen::VectorXd::Zero(2), rng);
  CHECK(step.allFinite());

  AdaptiveProposal c(1, 0.44, 0.1);
  for (int k = 0; k < 10000; ++k) {
    c.record(true, Eigen::VectorXd::Zero(1), true);
    c.adapt();
  }
  CHECK(c.log_scale == 4.0);
}

TEST_CASE("run_chain smoke on a 2x2 grid") {
  const auto grid = build_grid(2, 2, 1);
  for (auto kind : {PrecisionKind::car, PrecisionKind::spde, PrecisionKind::iid}) {
    CAPTURE(to_string(kind));
    const Problem problem(grid, small_dataset(grid), kind);
    const RunResult r = run_chain(problem, short_config(kind));
    CHECK(r.complete);
    REQUIRE(r.samples.num_samples == 5);
    CHECK(r.hyper_trace.size() == 5);
    CHECK(r.diagnostics.theta_ess.size() == 0);
    CHECK(r.diagnostics.blocks.size() == (kind == PrecisionKind::spde ? 6u : 3u));
    for (int k = 0; k < 5; ++k)
      for (int i = 0; i < 4; ++i) {
        double total = 0.0;
        for (int p = 0; p < 3; ++p) {
          CHECK(r.samples.at(k, i, p) >= 0.0);
          total += r.samples.at(k, i, p);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("run_chain is reproducible across thread counts") {
  const auto grid = build_grid(3, 3, 1);
  Dataset d = small_dataset(grid);
  const TownshipOverlap overlap = normalize_township(
      grid, "T1", std::vector<RawOverlap>{{grid.interior_index(2, 2), 1.0}, {grid.interior_index(0, 2), 2.0}});
  d.townships.push_back({"T1", {0, 2, 2, 1}, overlap});
  for (auto kind : {PrecisionKind::car, PrecisionKind::spde}) {
    const Problem problem(grid, d, kind);
    SamplerConfig c = short_config(kind);
    c.n_iter = 60;
    c.burn_in = 20;
    c.n_retained = 10;
    c.save_alpha = true;
    RunOptions one;
    one.threads = 1;
    RunOptions many;
    many.threads = 4;
    const RunResult a = run_chain(problem, c, one);
    const RunResult b = run_chain(problem, c, many);
    CHECK(a.samples.values == b.samples.values);
    REQUIRE(a.alpha_samples.size() == 10);
    for (std::size_t k = 0; k < 10; ++k) CHECK(a.alpha_samples[k] == b.alpha_samples[k]);
    CHECK(a.diagnostics.theta_ess.rows() == 9);
    REQUIRE(a.diagnostics.membership_frequency.size() == 1);
    const auto& f = a.diagnostics.membership_frequency[0];
    CHECK(f[0] + f[1] == doctest::Approx(1.0));
    c.seed = 43;
    CHECK(run_chain(problem, c, one).samples.values != a.samples.values);
  }
}

TEST_CASE("run_chain without data") {
  const auto grid = build_grid(3, 3, 0);
  Dataset d;
  d.taxa = TaxonRegistry({"a", "b"});
  CHECK_THROWS_AS(run_chain(Problem(grid, d, PrecisionKind::car), short_config(PrecisionKind::car)), NumericalError);
  const RunResult r = run_chain(Problem(grid, d, PrecisionKind::spde), short_config(PrecisionKind::spde));
  CHECK(r.samples.num_samples == 5);
}

TEST_CASE("run_chain rejects a model mismatch") {
  const auto grid = build_grid(2, 2, 0);
  const Problem problem(grid, small_dataset(grid), PrecisionKind::car);
  CHECK_THROWS_AS(run_chain(problem, short_config(PrecisionKind::spde)), InvalidArgument);
}

TEST_CASE("adaptation reaches reasonable acceptance rates") {
  const auto grid = build_grid(4, 4, 1);
  Dataset d;
  d.taxa = TaxonRegistry({"a", "b"});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) d.cells.push_back({grid.interior_index(x, y), {3 + x, 3 + y}});
  for (auto kind : {PrecisionKind::car, PrecisionKind::spde}) {
    const Problem problem(grid, d, kind);
    SamplerConfig c;
    c.model = kind;
    c.n_iter = 4000;
    c.burn_in = 2000;
    c.n_retained = 10;
    c.t_mc = 200;
    const RunResult r = run_chain(problem, c);
    for (const auto& b : r.diagnostics.blocks) {
      CAPTURE(b.block);
      CHECK(b.acceptance_rate > 0.1);
      CHECK(b.acceptance_rate < 0.75);
      CHECK(b.final_proposal_scale > 0.0);
    }
  }
}

TEST_CASE("CAR chain on identically observed cells survives wide sigma proposals") {
  // Flat posterior in log sigma drives the proposal scale to its clamp; tiny sigma must reject, not throw.
  const auto grid = build_grid(2, 1, 0);
  Dataset d;
  d.taxa = TaxonRegistry({"a", "b"});
  d.cells.push_back({0, {12, 8}});
  d.cells.push_back({1, {12, 8}});
  SamplerConfig c;
  c.model = PrecisionKind::car;
  c.n_iter = 6000;
  c.burn_in = 3000;
  c.n_retained = 10;
  c.t_mc = 100;
  c.seed = 3;
  CHECK_NOTHROW(run_chain(Problem(grid, d, PrecisionKind::car), c));
}
