#include "gridcomp/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <omp.h>

#include "gridcomp/error.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace gridcomp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Below this sigma, A + Q_p/sigma^2 for the intrinsic prior loses its smallest pivot to cancellation.
// The prior mass cut off is sigma_floor / sigma_upper, 1e-9 at the default bound.
constexpr double kSigmaFloor = 1e-6;

bool is_spde(PrecisionKind kind) { return kind == PrecisionKind::spde; }

int num_blocks(PrecisionKind kind) { return is_spde(kind) ? 2 : 1; }

// car / iid: block 0 = log sigma.  spde: block 0 = mu, block 1 = (log sigma, log rho).
bool is_mu_block(PrecisionKind kind, int block) { return is_spde(kind) && block == 0; }

const char* block_name(PrecisionKind kind, int block) {
  if (!is_spde(kind)) return "log_sigma";
  return block == 0 ? "mu" : "log_sigma_log_rho";
}

Eigen::VectorXd block_value(PrecisionKind kind, int block, const TaxonHyper& h) {
  if (!is_spde(kind)) return Eigen::VectorXd::Constant(1, std::log(h.sigma));
  if (block == 0) return Eigen::VectorXd::Constant(1, h.mu);
  Eigen::VectorXd v(2);
  v << std::log(h.sigma), std::log(h.rho);
  return v;
}

TaxonHyper with_block(PrecisionKind kind, int block, TaxonHyper h, const Eigen::VectorXd& v) {
  if (!is_spde(kind)) {
    h.sigma = std::exp(v[0]);
  } else if (block == 0) {
    h.mu = v[0];
  } else {
    h.sigma = std::exp(v[0]);
    h.rho = std::exp(v[1]);
  }
  return h;
}

void update_tree_w(StreamRng& rng, const Eigen::MatrixXd& alpha, int cell, int observed,
                   Eigen::Ref<Eigen::RowVectorXd> w) {
  const auto P = static_cast<int>(w.size());
  double lower = kNegInf;
  for (int p = 0; p < P; ++p)
    if (p != observed) lower = std::max(lower, w[p]);
  w[observed] = truncated_normal_below(rng, alpha(cell, observed), lower);
  for (int p = 0; p < P; ++p)
    if (p != observed) w[p] = truncated_normal_above(rng, alpha(cell, p), w[observed]);
}

int draw_index(const Eigen::VectorXd& probs, StreamRng& rng) {
  const double u = uniform_open01(rng);
  double cumulative = 0.0;
  for (int e = 0; e < probs.size(); ++e) {
    cumulative += probs[e];
    if (u < cumulative) return e;
  }
  return static_cast<int>(probs.size()) - 1;
}

struct TaxonWorkspace {
  FieldConditional current;
  FieldConditional proposal;
  bool current_valid = false;

  explicit TaxonWorkspace(const PrecisionStructure& s) : current(s), proposal(s) {}
};

void update_taxon(const Problem& problem, const SamplerConfig& config, ChainState& state,
                  const SufficientStats& stats, int p, TaxonWorkspace& ws) {
  const PrecisionKind kind = problem.kind();
  const auto& structure = problem.structure();
  const bool adapting = state.iteration <= config.burn_in;
  StreamRng rng = make_stream(config.seed, Stream::hyper, static_cast<std::uint64_t>(state.iteration),
                              static_cast<std::uint64_t>(p));
  TaxonHyper& h = state.hyper[p];
  if (!ws.current_valid) {
    ws.current.update(structure, h.sigma * h.sigma, h.rho, stats.tree_count);
    ws.current_valid = true;
  }
  const Eigen::VectorXd w_sum = stats.w_sum.col(p);
  double log_marginal = ws.current.log_marginal(w_sum, h.mu);
  double log_prior = log_hyper_prior(kind, h, config.hyperpriors);

  auto& blocks = state.proposals[p];
  for (int b = 0; b < static_cast<int>(blocks.size()); ++b) {
    const Eigen::VectorXd proposed = blocks[b].propose(block_value(kind, b, h), rng);
    const TaxonHyper candidate = with_block(kind, b, h, proposed);
    const double candidate_prior = log_hyper_prior(kind, candidate, config.hyperpriors);
    bool accepted = false;
    if (std::isfinite(candidate_prior)) {
      double candidate_marginal;
      if (is_mu_block(kind, b)) {
        candidate_marginal = ws.current.log_marginal(w_sum, candidate.mu);
      } else {
        ws.proposal.update(structure, candidate.sigma * candidate.sigma, candidate.rho, stats.tree_count);
        candidate_marginal = ws.proposal.log_marginal(w_sum, candidate.mu);
      }
      const double log_ratio = candidate_marginal - log_marginal + candidate_prior - log_prior;
      accepted = std::log(uniform_open01(rng)) < log_ratio;
      if (accepted) {
        h = candidate;
        log_marginal = candidate_marginal;
        log_prior = candidate_prior;
        if (!is_mu_block(kind, b)) std::swap(ws.current, ws.proposal);
        state.alpha.col(p) = ws.current.draw(w_sum, h.mu, rng);
      }
    }
    blocks[b].record(accepted, block_value(kind, b, h), adapting);
  }
  if (config.extra_alpha_draw) state.alpha.col(p) = ws.current.draw(w_sum, h.mu, rng);
}

Eigen::MatrixXd interior_rows(const GridSpec& grid, const Eigen::MatrixXd& alpha) {
  const auto cells = grid.interior_cells();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(cells.size()), alpha.cols());
  for (std::size_t o = 0; o < cells.size(); ++o) out.row(static_cast<Eigen::Index>(o)) = alpha.row(cells[o]);
  return out;
}

void log_event(std::ostream* log, const nlohmann::json& record) {
  if (log) *log << record.dump() << '\n' << std::flush;
}

nlohmann::json acceptance_json(const ChainState& state) {
  nlohmann::json rates = nlohmann::json::array();
  for (const auto& blocks : state.proposals) {
    nlohmann::json taxon = nlohmann::json::array();
    for (const auto& b : blocks) taxon.push_back(b.acceptance_rate());
    rates.push_back(taxon);
  }
  return rates;
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_iter < 1) throw InvalidArgument("n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter) throw InvalidArgument("burn_in must lie in [0, n_iter)");
  if (n_retained < 1) throw InvalidArgument("n_retained must be positive");
  if ((n_iter - burn_in) % n_retained != 0)
    throw InvalidArgument("n_retained must divide n_iter - burn_in evenly");
  if (adapt_interval < 1) throw InvalidArgument("adapt_interval must be positive");
  if (!(target_accept_1d > 0.0 && target_accept_1d < 1.0) || !(target_accept_2d > 0.0 && target_accept_2d < 1.0))
    throw InvalidArgument("target acceptance rates must lie in (0, 1)");
  if (t_mc < 1) throw InvalidArgument("t_mc must be positive");
  hyperpriors.validate();
  if (!(init_sigma > 0.0 && init_sigma < hyperpriors.sigma_upper))
    throw InvalidArgument("init_sigma must lie inside the sigma prior support");
  if (model == PrecisionKind::spde) {
    if (!(init_rho > hyperpriors.rho_lower && init_rho < hyperpriors.rho_upper))
      throw InvalidArgument("init_rho must lie inside the rho prior support");
    if (!(std::abs(init_mu) < hyperpriors.mu_bound))
      throw InvalidArgument("init_mu must lie inside the mu prior support");
  }
}

Problem::Problem(const GridSpec& grid, const Dataset& data, PrecisionKind kind)
    : grid_(grid),
      graph_(std::make_shared<const NeighborGraph>(build_neighbor_graph(grid, required_order(kind)))),
      structure_(kind, *graph_),
      taxa_(data.taxa.names()) {
  data.validate(grid);
  for (const auto& record : data.cells) {
    if (record.total() == 0) continue;
    grid_cell_.push_back(record.cell);
    grid_begin_.push_back(static_cast<int>(tree_taxon_.size()));
    for (int p = 0; p < static_cast<int>(record.counts.size()); ++p)
      tree_taxon_.insert(tree_taxon_.end(), record.counts[p], p);
  }
  grid_begin_.push_back(static_cast<int>(tree_taxon_.size()));
  for (const auto& township : data.townships) {
    townships_.push_back(township.overlap);
    township_begin_.push_back(static_cast<int>(tree_taxon_.size()));
    tree_taxon_.insert(tree_taxon_.end(), township.tree_taxa.begin(), township.tree_taxa.end());
  }
  township_begin_.push_back(static_cast<int>(tree_taxon_.size()));
}

AdaptiveProposal::AdaptiveProposal(int dim_, double target_, double initial_sd)
    : dim(dim_),
      target(target_),
      log_scale(std::log(initial_sd)),
      shape(Eigen::MatrixXd::Identity(dim_, dim_)),
      running_mean(Eigen::VectorXd::Zero(dim_)),
      running_m2(Eigen::MatrixXd::Zero(dim_, dim_)) {}

Eigen::VectorXd AdaptiveProposal::propose(const Eigen::VectorXd& current, StreamRng& rng) const {
  Eigen::VectorXd z(dim);
  for (int d = 0; d < dim; ++d) z[d] = standard_normal(rng);
  if (dim == 1) return current + std::exp(log_scale) * std::sqrt(shape(0, 0)) * z;
  const Eigen::MatrixXd chol = shape.llt().matrixL();
  return current + std::exp(log_scale) * (chol * z);
}

void AdaptiveProposal::record(bool was_accepted, const Eigen::VectorXd& value, bool adapting) {
  ++proposed;
  accepted += was_accepted;
  if (!adapting) {
    ++post_proposed;
    post_accepted += was_accepted;
    return;
  }
  ++batch_proposed;
  batch_accepted += was_accepted;
  if (dim > 1) {
    ++n_seen;
    const Eigen::VectorXd delta = value - running_mean;
    running_mean += delta / static_cast<double>(n_seen);
    running_m2 += delta * (value - running_mean).transpose();
  }
}

void AdaptiveProposal::adapt() {
  if (batch_proposed == 0) return;
  ++batches;
  const double rate = static_cast<double>(batch_accepted) / static_cast<double>(batch_proposed);
  log_scale += (rate - target) / std::sqrt(static_cast<double>(batches));
  log_scale = std::clamp(log_scale, -12.0, 4.0);
  batch_accepted = 0;
  batch_proposed = 0;
  if (dim > 1 && n_seen > 10 * dim) {
    Eigen::MatrixXd cov = running_m2 / static_cast<double>(n_seen - 1);
    cov += 1e-10 * Eigen::MatrixXd::Identity(dim, dim);
    const double det = cov.determinant();
    if (std::isfinite(det) && det > 0.0) shape = cov / std::pow(det, 1.0 / dim);
  }
}

Eigen::VectorXd SufficientStats::w_bar(int taxon) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(tree_count.size());
  for (Eigen::Index i = 0; i < tree_count.size(); ++i)
    if (tree_count[i] > 0) out[i] = w_sum(i, taxon) / tree_count[i];
  return out;
}

SufficientStats compute_stats(const Problem& problem, const ChainState& state) {
  SufficientStats stats{Eigen::VectorXd::Zero(problem.num_cells()),
                        Eigen::MatrixXd::Zero(problem.num_cells(), problem.num_taxa())};
  for (int j = 0; j < problem.num_trees(); ++j) {
    const int c = state.cell_of_tree[j];
    stats.tree_count[c] += 1.0;
    stats.w_sum.row(c) += state.w.row(j);
  }
  return stats;
}

FieldConditional::FieldConditional(const PrecisionStructure& structure)
    : kind_(structure.kind()),
      posterior_([&] {
        SparseMatrix m = structure.structure(1.0);
        for (int i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += 1.0;
        return SparseFactor(m);
      }()) {
  if (kind_ == PrecisionKind::spde) prior_.emplace(structure.structure(1.0));
}

void FieldConditional::update(const PrecisionStructure& structure, double sigma2, double rho,
                              const Eigen::VectorXd& tree_count) {
  const SparseMatrix q = structure.structure(rho);
  const SparseMatrix qp = q / structure.scale(sigma2, rho);
  qp_ones_ = qp * Eigen::VectorXd::Ones(qp.rows());
  ones_qp_ones_ = qp_ones_.sum();
  double logdet_structure = 0.0;
  if (prior_) {
    prior_->refactorize(q);
    logdet_structure = prior_->logdet();
  }
  log_gdet_ = structure.log_gdet(sigma2, rho, logdet_structure);

  SparseMatrix m = qp;
  for (int i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += tree_count[i];
  try {
    posterior_.refactorize(m);
  } catch (const NumericalError& e) {
    if (kind_ == PrecisionKind::car && !(tree_count.sum() > 0.0))
      throw NumericalError(std::string("A + Q_p is not positive definite: the intrinsic CAR prior needs at least "
                                       "one cell with trees (") + e.what() + ")",
                           e.pivot());
    throw;
  }
}

Eigen::VectorXd FieldConditional::mean_term(const Eigen::VectorXd& w_sum, double mu) const {
  if (mu == 0.0) return w_sum;
  return w_sum + mu * qp_ones_;
}

double FieldConditional::log_marginal(const Eigen::VectorXd& w_sum, double mu) const {
  const Eigen::VectorXd b = mean_term(w_sum, mu);
  const Eigen::VectorXd x = posterior_.solve(b);
  return 0.5 * log_gdet_ - 0.5 * posterior_.logdet() + 0.5 * b.dot(x) - 0.5 * mu * mu * ones_qp_ones_;
}

Eigen::VectorXd FieldConditional::draw(const Eigen::VectorXd& w_sum, double mu, StreamRng& rng) const {
  return posterior_.sample_gaussian(mean_term(w_sum, mu), rng);
}

Eigen::VectorXd FieldConditional::mean(const Eigen::VectorXd& w_sum, double mu) const {
  return posterior_.solve(mean_term(w_sum, mu));
}

ChainState initialize_chain(const Problem& problem, const SamplerConfig& config) {
  const int P = problem.num_taxa();
  const PrecisionKind kind = problem.kind();
  ChainState state;
  state.alpha = Eigen::MatrixXd::Zero(problem.num_cells(), P);
  state.w = RowMatrix::Zero(problem.num_trees(), P);
  state.cell_of_tree.assign(problem.num_trees(), -1);
  TaxonHyper initial{config.init_sigma, config.init_rho, kind == PrecisionKind::spde ? config.init_mu : 0.0};
  state.hyper.assign(P, initial);
  for (int p = 0; p < P; ++p) {
    std::vector<AdaptiveProposal> blocks;
    for (int b = 0; b < num_blocks(kind); ++b) {
      const int dim = (is_spde(kind) && b == 1) ? 2 : 1;
      blocks.emplace_back(dim, dim == 1 ? config.target_accept_1d : config.target_accept_2d, 0.1);
    }
    state.proposals.push_back(std::move(blocks));
  }

  for (int r = 0; r < problem.num_grid_records(); ++r)
    for (int j = problem.grid_begin(r); j < problem.grid_begin(r + 1); ++j)
      state.cell_of_tree[j] = problem.grid_record_cell(r);
  for (int t = 0; t < problem.num_townships(); ++t) {
    const auto& overlap = problem.township_overlap(t);
    Eigen::VectorXd prior(static_cast<Eigen::Index>(overlap.entries.size()));
    for (std::size_t e = 0; e < overlap.entries.size(); ++e) prior[static_cast<Eigen::Index>(e)] = overlap.entries[e].weight;
    StreamRng rng = make_stream(config.seed, Stream::init, 0, static_cast<std::uint64_t>(t));
    for (int j = problem.township_begin(t); j < problem.township_begin(t + 1); ++j)
      state.cell_of_tree[j] = overlap.entries[draw_index(prior, rng)].cell;
  }

  StreamRng rng = make_stream(config.seed, Stream::init, 1, 0);
  for (int j = 0; j < problem.num_trees(); ++j) {
    const int c = state.cell_of_tree[j];
    const int q = problem.tree_taxon(j);
    state.w(j, q) = state.alpha(c, q) + standard_normal(rng);
    for (int p = 0; p < P; ++p)
      if (p != q) state.w(j, p) = truncated_normal_above(rng, state.alpha(c, p), state.w(j, q));
  }
  return state;
}

void update_w(const Problem& problem, ChainState& state, std::uint64_t seed, long iteration) {
  const int records = problem.num_grid_records();
  const int units = records + problem.num_townships();
  detail::parallel_for(units, [&](int u) {
    const bool gridded = u < records;
    StreamRng rng = make_stream(seed, gridded ? Stream::w_grid : Stream::w_township,
                                static_cast<std::uint64_t>(iteration),
                                static_cast<std::uint64_t>(gridded ? u : u - records));
    const int begin = gridded ? problem.grid_begin(u) : problem.township_begin(u - records);
    const int end = gridded ? problem.grid_begin(u + 1) : problem.township_begin(u - records + 1);
    for (int j = begin; j < end; ++j)
      update_tree_w(rng, state.alpha, state.cell_of_tree[j], problem.tree_taxon(j), state.w.row(j));
  });
}

Eigen::VectorXd membership_probabilities(const TownshipOverlap& overlap, const Eigen::MatrixXd& alpha,
                                         const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  const auto n = static_cast<Eigen::Index>(overlap.entries.size());
  Eigen::VectorXd logw(n);
  for (Eigen::Index e = 0; e < n; ++e) {
    const auto& entry = overlap.entries[static_cast<std::size_t>(e)];
    logw[e] = std::log(entry.weight) - 0.5 * (w - alpha.row(entry.cell)).squaredNorm();
  }
  const double top = logw.maxCoeff();
  // Scalar exp: Eigen's packet exp clamps -inf to a denormal, which would give zero-weight cells mass.
  Eigen::VectorXd probs = (logw.array() - top).unaryExpr([](double v) { return std::exp(v); });
  const double total = probs.sum();
  if (!std::isfinite(top) || !(total > 0.0) || !std::isfinite(total))
    throw NumericalError("membership weights degenerate for a tree in township " + overlap.township_id);
  return probs / total;
}

void update_memberships(const Problem& problem, ChainState& state, std::uint64_t seed, long iteration) {
  detail::parallel_for(problem.num_townships(), [&](int t) {
    const auto& overlap = problem.township_overlap(t);
    StreamRng rng = make_stream(seed, Stream::membership, static_cast<std::uint64_t>(iteration),
                                static_cast<std::uint64_t>(t));
    for (int j = problem.township_begin(t); j < problem.township_begin(t + 1); ++j) {
      Eigen::VectorXd probs;
      try {
        probs = membership_probabilities(overlap, state.alpha, state.w.row(j));
      } catch (const NumericalError&) {
        throw NumericalError("membership weights degenerate for tree " + std::to_string(j - problem.township_begin(t)) +
                             " of township " + overlap.township_id);
      }
      state.cell_of_tree[j] = overlap.entries[draw_index(probs, rng)].cell;
    }
  });
}

Eigen::VectorXd gibbs_alpha(const PrecisionStructure& structure, const TaxonHyper& hyper,
                            const SufficientStats& stats, int taxon, StreamRng& rng) {
  FieldConditional conditional(structure);
  conditional.update(structure, hyper.sigma * hyper.sigma, hyper.rho, stats.tree_count);
  const double mu = structure.kind() == PrecisionKind::spde ? hyper.mu : 0.0;
  return conditional.draw(stats.w_sum.col(taxon), mu, rng);
}

double marginal_logdensity_w(const PrecisionStructure& structure, const TaxonHyper& hyper,
                             const SufficientStats& stats, int taxon) {
  FieldConditional conditional(structure);
  conditional.update(structure, hyper.sigma * hyper.sigma, hyper.rho, stats.tree_count);
  const double mu = structure.kind() == PrecisionKind::spde ? hyper.mu : 0.0;
  return conditional.log_marginal(stats.w_sum.col(taxon), mu);
}

double log_hyper_prior(PrecisionKind kind, const TaxonHyper& hyper, const Hyperpriors& priors) {
  if (!(hyper.sigma > kSigmaFloor && hyper.sigma < priors.sigma_upper)) return kNegInf;
  double lp = std::log(hyper.sigma);
  if (kind == PrecisionKind::spde) {
    if (!(hyper.rho > priors.rho_lower && hyper.rho < priors.rho_upper)) return kNegInf;
    if (!(std::abs(hyper.mu) < priors.mu_bound)) return kNegInf;
    lp += std::log(hyper.rho);
  }
  return lp;
}

bool argmax_consistent(const Problem& problem, const ChainState& state) {
  for (int j = 0; j < problem.num_trees(); ++j) {
    Eigen::Index best;
    state.w.row(j).maxCoeff(&best);
    if (static_cast<int>(best) != problem.tree_taxon(j)) return false;
  }
  return true;
}

RunResult run_chain(const Problem& problem, const SamplerConfig& config, const RunOptions& options) {
  config.validate();
  if (config.model != problem.kind()) throw InvalidArgument("sampler model kind differs from the problem's");
  if (options.threads > 0) omp_set_num_threads(options.threads);
  const auto start = std::chrono::steady_clock::now();
  const int P = problem.num_taxa();
  const GridSpec& grid = problem.grid();

  RunProgress progress;
  if (!options.resume_path.empty()) {
    progress = read_checkpoint(options.resume_path, problem, config);
  } else {
    progress.state = initialize_chain(problem, config);
    progress.samples.grid = build_grid(grid.nx, grid.ny, 0);
    progress.samples.grid.cell_size = grid.cell_size;
    progress.samples.grid.origin_x = grid.origin_x;
    progress.samples.grid.origin_y = grid.origin_y;
    progress.samples.taxa = problem.taxa();
    for (int t = 0; t < problem.num_townships(); ++t)
      progress.membership_counts.emplace_back(problem.township_overlap(t).entries.size(), 0L);
  }
  ChainState& state = progress.state;

  std::vector<TaxonWorkspace> workspaces;
  workspaces.reserve(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) workspaces.emplace_back(problem.structure());

  log_event(options.log, {{"event", "start"},
                          {"model", std::string(to_string(config.model))},
                          {"cells", problem.num_cells()},
                          {"taxa", P},
                          {"trees", problem.num_trees()},
                          {"townships", problem.num_townships()},
                          {"seed", config.seed},
                          {"resumed_at", state.iteration}});

  const bool has_townships = problem.num_townships() > 0;
  while (state.iteration < config.n_iter) {
    ++state.iteration;
    const long it = state.iteration;
    update_w(problem, state, config.seed, it);
    if (has_townships) {
      update_memberships(problem, state, config.seed, it);
      for (auto& ws : workspaces) ws.current_valid = false;
    }
    const SufficientStats stats = compute_stats(problem, state);
    detail::parallel_for(P, [&](int p) { update_taxon(problem, config, state, stats, p, workspaces[p]); });
#ifndef NDEBUG
    if (!argmax_consistent(problem, state)) throw NumericalError("latent W lost argmax consistency");
#endif

    const bool adapting = it <= config.burn_in;
    if (adapting && it % config.adapt_interval == 0)
      for (auto& blocks : state.proposals)
        for (auto& b : blocks) b.adapt();

    if (!adapting) {
      for (int t = 0; t < problem.num_townships(); ++t) {
        const auto& entries = problem.township_overlap(t).entries;
        for (int j = problem.township_begin(t); j < problem.township_begin(t + 1); ++j) {
          const auto e = std::find_if(entries.begin(), entries.end(),
                                      [&](const OverlapEntry& x) { return x.cell == state.cell_of_tree[j]; });
          ++progress.membership_counts[t][static_cast<std::size_t>(e - entries.begin())];
        }
      }
    }

    if (config.is_retained(it)) {
      const Eigen::MatrixXd alpha_interior = interior_rows(grid, state.alpha);
      progress.samples.append(estimate_theta(alpha_interior, config.t_mc, config.seed,
                                             static_cast<std::uint64_t>(progress.samples.num_samples)));
      progress.hyper_trace.push_back(state.hyper);
      if (config.save_alpha) progress.alpha_samples.push_back(alpha_interior);
    }

    if (options.log && options.log_every > 0 && it % options.log_every == 0) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log_event(options.log, {{"event", "progress"},
                              {"iteration", it},
                              {"retained", progress.samples.num_samples},
                              {"acceptance", acceptance_json(state)},
                              {"elapsed_s", elapsed}});
    }
    if (!options.checkpoint_path.empty() && options.checkpoint_every > 0 && it % options.checkpoint_every == 0)
      write_checkpoint(options.checkpoint_path, problem, config, progress);
    if (options.stop_after > 0 && it == options.stop_after && it < config.n_iter) {
      if (!options.checkpoint_path.empty()) write_checkpoint(options.checkpoint_path, problem, config, progress);
      RunResult partial;
      partial.samples = std::move(progress.samples);
      partial.hyper_trace = std::move(progress.hyper_trace);
      partial.complete = false;
      partial.diagnostics.iterations = it;
      return partial;
    }
  }

  RunResult result;
  result.samples = std::move(progress.samples);
  result.hyper_trace = std::move(progress.hyper_trace);
  result.alpha_samples = std::move(progress.alpha_samples);
  ChainDiagnostics& diag = result.diagnostics;
  diag.iterations = state.iteration;
  for (int p = 0; p < P; ++p)
    for (int b = 0; b < static_cast<int>(state.proposals[p].size()); ++b) {
      const auto& prop = state.proposals[p][b];
      diag.blocks.push_back({p, block_name(problem.kind(), b), prop.post_burn_in_rate(), prop.acceptance_rate(),
                             std::exp(prop.log_scale)});
    }
  if (result.samples.num_samples >= 10) {
    const int m = result.samples.num_cells();
    diag.theta_ess.resize(m, P);
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < P; ++p) diag.theta_ess(i, p) = effective_sample_size(result.samples.series(i, p));
  }
  for (const auto& counts : progress.membership_counts) {
    long total = 0;
    for (long c : counts) total += c;
    std::vector<double> freq;
    for (long c : counts) freq.push_back(total > 0 ? static_cast<double>(c) / static_cast<double>(total) : 0.0);
    diag.membership_frequency.push_back(std::move(freq));
  }
  diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log_event(options.log, {{"event", "finish"},
                          {"iterations", diag.iterations},
                          {"retained", result.samples.num_samples},
                          {"acceptance", acceptance_json(state)},
                          {"elapsed_s", diag.seconds}});
  return result;
}

}  // namespace gridcomp
