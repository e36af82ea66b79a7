#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridcomp/estimator.hpp"
#include "gridcomp/grid.hpp"
#include "gridcomp/model.hpp"
#include "gridcomp/precision.hpp"
#include "gridcomp/random.hpp"

namespace gridcomp {

struct SamplerConfig {
  PrecisionKind model = PrecisionKind::car;
  long n_iter = 150000;
  long burn_in = 25000;
  int n_retained = 250;
  std::uint64_t seed = 1;
  int adapt_interval = 50;
  double target_accept_1d = 0.44;
  double target_accept_2d = 0.234;
  Hyperpriors hyperpriors;
  int t_mc = 10000;
  bool save_alpha = false;
  // One unconditional alpha draw per taxon after the hyperparameter blocks.
  bool extra_alpha_draw = true;
  double init_sigma = 1.0;
  double init_rho = 10.0;
  double init_mu = 0.0;

  void validate() const;
  // Retained iterations are burn_in + j * thinning(), j = 1..n_retained.
  long thinning() const { return (n_iter - burn_in) / n_retained; }
  bool is_retained(long iteration) const {
    return iteration > burn_in && (iteration - burn_in) % thinning() == 0;
  }
};

// Immutable description of one fitting problem: geometry, precision
// structure and a flat table of trees. Gridded trees come first, grouped by
// count record; township trees follow, grouped by township.
class Problem {
 public:
  Problem(const GridSpec& grid, const Dataset& data, PrecisionKind kind);

  const GridSpec& grid() const { return grid_; }
  const NeighborGraph& graph() const { return *graph_; }
  std::shared_ptr<const NeighborGraph> graph_ptr() const { return graph_; }
  const PrecisionStructure& structure() const { return structure_; }
  PrecisionKind kind() const { return structure_.kind(); }
  int num_cells() const { return grid_.num_cells(); }
  int num_taxa() const { return static_cast<int>(taxa_.size()); }
  const std::vector<std::string>& taxa() const { return taxa_; }

  int num_trees() const { return static_cast<int>(tree_taxon_.size()); }
  int tree_taxon(int tree) const { return tree_taxon_[tree]; }

  // Gridded trees of count record r occupy [grid_begin[r], grid_begin[r+1]).
  int num_grid_records() const { return static_cast<int>(grid_cell_.size()); }
  int grid_record_cell(int r) const { return grid_cell_[r]; }
  int grid_begin(int r) const { return grid_begin_[r]; }
  // Trees of township t occupy [township_begin[t], township_begin[t+1]).
  int num_townships() const { return static_cast<int>(townships_.size()); }
  int township_begin(int t) const { return township_begin_[t]; }
  const TownshipOverlap& township_overlap(int t) const { return townships_[t]; }
  int first_township_tree() const { return township_begin_.empty() ? num_trees() : township_begin_.front(); }

 private:
  GridSpec grid_;
  std::shared_ptr<const NeighborGraph> graph_;
  PrecisionStructure structure_;
  std::vector<std::string> taxa_;
  std::vector<int> tree_taxon_;
  std::vector<int> grid_cell_;
  std::vector<int> grid_begin_;
  std::vector<TownshipOverlap> townships_;
  std::vector<int> township_begin_;
};

struct TaxonHyper {
  double sigma = 1.0;
  double rho = 10.0;  // spde only
  double mu = 0.0;    // spde only
};

// Random-walk proposal for one hyperparameter block. The proposal covariance
// is exp(2 log_scale) * shape; log_scale follows a Robbins-Monro recursion
// toward the target acceptance rate with gain batch^(-1/2), and for 2-D
// blocks shape tracks the running covariance of the block, normalized to
// unit determinant.
struct AdaptiveProposal {
  int dim = 1;
  double target = 0.44;
  double log_scale = 0.0;
  Eigen::MatrixXd shape;
  long batches = 0;
  long batch_accepted = 0;
  long batch_proposed = 0;
  long accepted = 0;
  long proposed = 0;
  long post_accepted = 0;  // after burn-in
  long post_proposed = 0;
  long n_seen = 0;
  Eigen::VectorXd running_mean;
  Eigen::MatrixXd running_m2;

  AdaptiveProposal() = default;
  AdaptiveProposal(int dim, double target, double initial_sd);

  Eigen::VectorXd propose(const Eigen::VectorXd& current, StreamRng& rng) const;
  void record(bool was_accepted, const Eigen::VectorXd& value, bool adapting);
  // Closes an adaptation batch; called every adapt_interval iterations during burn-in.
  void adapt();
  double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
  double post_burn_in_rate() const {
    return post_proposed ? static_cast<double>(post_accepted) / post_proposed : 0.0;
  }
};

// Everything one chain carries between sweeps.
struct ChainState {
  long iteration = 0;
  Eigen::MatrixXd alpha;  // cells x taxa
  RowMatrix w;            // trees x taxa
  std::vector<int> cell_of_tree;
  std::vector<TaxonHyper> hyper;
  std::vector<std::vector<AdaptiveProposal>> proposals;  // [taxon][block]
};

// A = diag(tree_count); w_sum = A * w_bar per taxon (zero where A_ii = 0).
struct SufficientStats {
  Eigen::VectorXd tree_count;
  Eigen::MatrixXd w_sum;  // cells x taxa

  Eigen::VectorXd w_bar(int taxon) const;
};

SufficientStats compute_stats(const Problem& problem, const ChainState& state);

// Gaussian full conditional of one taxon's field at fixed hyperparameters:
// precision A + Q_p and mean-term b = A w_bar + mu Q_p 1.
class FieldConditional {
 public:
  explicit FieldConditional(const PrecisionStructure& structure);

  void update(const PrecisionStructure& structure, double sigma2, double rho, const Eigen::VectorXd& tree_count);
  Eigen::VectorXd mean_term(const Eigen::VectorXd& w_sum, double mu) const;
  // log p(W_p | phi) up to a phi-free constant.
  double log_marginal(const Eigen::VectorXd& w_sum, double mu) const;
  Eigen::VectorXd draw(const Eigen::VectorXd& w_sum, double mu, StreamRng& rng) const;
  Eigen::VectorXd mean(const Eigen::VectorXd& w_sum, double mu) const;

 private:
  PrecisionKind kind_;
  Eigen::VectorXd qp_ones_;
  double ones_qp_ones_ = 0.0;
  double log_gdet_ = 0.0;
  SparseFactor posterior_;
  std::optional<SparseFactor> prior_;  // Q(rho), spde only
};

// Initial state: alpha = 0, configured hyperparameters, memberships from the
// overlap weights, W from the truncated conditionals.
ChainState initialize_chain(const Problem& problem, const SamplerConfig& config);

// Truncated-normal Gibbs update of every tree's latent vector. The observed
// taxon is drawn first above the max of the others, then each other taxon
// below the fresh value.
void update_w(const Problem& problem, ChainState& state, std::uint64_t seed, long iteration);

// Redraws township tree cells from psi_i * exp(-0.5 |W - alpha_i|^2).
void update_memberships(const Problem& problem, ChainState& state, std::uint64_t seed, long iteration);

// Membership probabilities of one tree over a township's overlap entries.
Eigen::VectorXd membership_probabilities(const TownshipOverlap& overlap, const Eigen::MatrixXd& alpha,
                                         const Eigen::Ref<const Eigen::RowVectorXd>& w);

// Exact draw alpha_p ~ N((A + Q_p)^-1 b, (A + Q_p)^-1).
Eigen::VectorXd gibbs_alpha(const PrecisionStructure& structure, const TaxonHyper& hyper,
                            const SufficientStats& stats, int taxon, StreamRng& rng);

// 1/2 log gdet Q_p - 1/2 log det(A + Q_p) + 1/2 b' (A + Q_p)^-1 b - 1/2 mu^2 1'Q_p 1.
double marginal_logdensity_w(const PrecisionStructure& structure, const TaxonHyper& hyper,
                             const SufficientStats& stats, int taxon);

// Log prior density of the hyperparameters on the sampled (log) scale,
// including the Jacobian of the log transforms; -inf outside the support.
double log_hyper_prior(PrecisionKind kind, const TaxonHyper& hyper, const Hyperpriors& priors);

struct BlockDiagnostics {
  int taxon;
  std::string block;
  double acceptance_rate;       // after burn-in
  double overall_acceptance;    // whole run
  double final_proposal_scale;  // exp(log_scale)
};

struct ChainDiagnostics {
  long iterations = 0;
  double seconds = 0.0;
  std::vector<BlockDiagnostics> blocks;
  // Per (output cell, taxon) ESS of the retained theta series; empty when K < 10.
  Eigen::MatrixXd theta_ess;
  // Post-burn-in share of township tree assignments per overlap entry.
  std::vector<std::vector<double>> membership_frequency;
};

struct RunResult {
  PosteriorSamples samples;
  ChainDiagnostics diagnostics;
  std::vector<std::vector<TaxonHyper>> hyper_trace;  // [retained sample][taxon]
  std::vector<Eigen::MatrixXd> alpha_samples;        // interior rows, only with save_alpha
  bool complete = true;
};

struct RunOptions {
  std::ostream* log = nullptr;  // line-delimited JSON progress records
  long log_every = 1000;
  std::string checkpoint_path;
  long checkpoint_every = 0;
  std::string resume_path;
  // Write a checkpoint and return early after this iteration (0 = never).
  long stop_after = 0;
  int threads = 0;  // 0 = leave the OpenMP default
};

// Checks argmax(W) equals the observed taxon for every tree, lowest index
// winning ties.
bool argmax_consistent(const Problem& problem, const ChainState& state);

RunResult run_chain(const Problem& problem, const SamplerConfig& config, const RunOptions& options = {});

// Accumulators that live across checkpoints alongside the chain state.
struct RunProgress {
  ChainState state;
  PosteriorSamples samples;
  std::vector<std::vector<TaxonHyper>> hyper_trace;
  std::vector<Eigen::MatrixXd> alpha_samples;
  std::vector<std::vector<long>> membership_counts;  // [township][entry]
};

void write_checkpoint(const std::string& path, const Problem& problem, const SamplerConfig& config,
                      const RunProgress& progress);
RunProgress read_checkpoint(const std::string& path, const Problem& problem, const SamplerConfig& config);

}  // namespace gridcomp
