#pragma once

#include <memory>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "gridcomp/grid.hpp"
#include "gridcomp/random.hpp"

namespace gridcomp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

// car:  intrinsic CAR on cardinal neighbors, alpha ~ N(0, sigma2 Q^-).
// spde: lattice Matern (nu = 1) approximation,
//       alpha ~ N(mu, sigma2 * 4 pi / rho^2 * Q(rho)^-1).
// iid:  non-spatial reference prior alpha ~ N(0, sigma2 I); used for
//       conjugate checks and as a no-smoothing baseline.
enum class PrecisionKind { car, spde, iid };

std::string_view to_string(PrecisionKind kind);
PrecisionKind parse_precision_kind(std::string_view text);
NeighborOrder required_order(PrecisionKind kind);

// Structure matrix D - C of the intrinsic CAR model.
SparseMatrix build_car_structure(const NeighborGraph& graph);

// Q(rho) with a = 4 + 1/rho^2: diagonal 4 + a^2, cardinal -2a, diagonal
// neighbors 2, second-order cardinal 1. Stencil entries falling outside the
// lattice are dropped and the diagonal is left unchanged.
SparseMatrix build_spde_structure(const NeighborGraph& graph, double rho);

struct PrecisionModel {
  PrecisionKind kind = PrecisionKind::car;
  std::shared_ptr<const NeighborGraph> graph;
  double sigma2 = 1.0;
  double rho = 10.0;  // spde only
  double mu = 0.0;    // spde only
};

// Q_p = Q / sigma2 (car, iid) or Q(rho) / (sigma2 * 4 pi / rho^2) (spde).
SparseMatrix effective_precision(const PrecisionModel& model);

// (m - 1) log(1 / sigma2): log generalized determinant of the scaled ICAR
// precision, dropping the sigma-free constant from the structure matrix.
double generalized_logdet_icar(const SparseMatrix& structure, double sigma2, int m);

// Matern correlation with range rho and smoothness nu, parameterized so that
// the Bessel argument is 2 sqrt(nu) d / rho.
double matern_correlation(double d, double rho, double nu);

// Precomputed pieces for rebuilding a model's precision at new
// hyperparameters. Every matrix it returns shares one sparsity pattern, which
// lets a SparseFactor reuse its symbolic analysis.
class PrecisionStructure {
 public:
  PrecisionStructure(PrecisionKind kind, const NeighborGraph& graph);

  PrecisionKind kind() const { return kind_; }
  int size() const { return static_cast<int>(identity_.rows()); }

  // Q for car / iid, Q(rho) for spde.
  SparseMatrix structure(double rho) const;
  // Scale c such that Q_p = structure(rho) / c.
  double scale(double sigma2, double rho) const;
  SparseMatrix effective(double sigma2, double rho) const;
  // Generalized log-determinant of Q_p. For car the sigma-free constant is
  // dropped; spde needs log det Q(rho), passed in by the caller.
  double log_gdet(double sigma2, double rho, double logdet_structure) const;

 private:
  PrecisionKind kind_;
  SparseMatrix identity_;
  SparseMatrix cardinal_;      // adjacency of cardinal neighbors
  SparseMatrix diagonal_;      // spde: diagonal-neighbor adjacency
  SparseMatrix second_order_;  // spde: second-order cardinal adjacency
  SparseMatrix fixed_;         // car / iid structure
};

// Cholesky factorization of a sparse symmetric positive-definite matrix,
// backed by CHOLMOD. The fill-reducing ordering is computed once in the
// constructor; refactorize() reuses it for any matrix with the same pattern.
class SparseFactor {
 public:
  explicit SparseFactor(const SparseMatrix& m);
  ~SparseFactor();
  SparseFactor(SparseFactor&& other) noexcept;
  SparseFactor& operator=(SparseFactor&& other) noexcept;
  SparseFactor(const SparseFactor&) = delete;
  SparseFactor& operator=(const SparseFactor&) = delete;

  // Throws NumericalError carrying the failing pivot if m is not positive definite.
  void refactorize(const SparseMatrix& m);

  int size() const { return n_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  // x = M^-1 b + L^-T z with z standard normal, so x ~ N(M^-1 b, M^-1).
  Eigen::VectorXd sample_gaussian(const Eigen::VectorXd& b, StreamRng& rng) const;
  // L^-T z mapped back to the original ordering; N(0, M^-1) for standard normal z.
  Eigen::VectorXd whiten_inverse(const Eigen::VectorXd& z) const;
  double logdet() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

}  // namespace gridcomp
