#include <cmath>
#include <string>

#include <cholmod.h>

#include "gridcomp/error.hpp"
#include "gridcomp/precision.hpp"

namespace gridcomp {

struct SparseFactor::Impl {
  cholmod_common common;
  cholmod_factor* factor = nullptr;

  Impl() {
    cholmod_start(&common);
    common.print = 0;
    common.error_handler = nullptr;
    common.supernodal = CHOLMOD_SIMPLICIAL;
    common.final_asis = 0;
    common.final_ll = 1;
    common.nmethods = 1;
    common.method[0].ordering = CHOLMOD_AMD;
    common.postorder = 1;
  }
  ~Impl() {
    if (factor) cholmod_free_factor(&factor, &common);
    cholmod_finish(&common);
  }
  Impl(const Impl&) = delete;
  Impl& operator=(const Impl&) = delete;
};

namespace {

// Non-owning CHOLMOD view of a compressed Eigen matrix; only the lower
// triangle is read.
cholmod_sparse view_lower(const SparseMatrix& m) {
  cholmod_sparse a{};
  a.nrow = static_cast<size_t>(m.rows());
  a.ncol = static_cast<size_t>(m.cols());
  a.nzmax = static_cast<size_t>(m.nonZeros());
  a.p = const_cast<int*>(m.outerIndexPtr());
  a.i = const_cast<int*>(m.innerIndexPtr());
  a.x = const_cast<double*>(m.valuePtr());
  a.stype = -1;
  a.itype = CHOLMOD_INT;
  a.xtype = CHOLMOD_REAL;
  a.dtype = CHOLMOD_DOUBLE;
  a.sorted = 1;
  a.packed = 1;
  return a;
}

cholmod_dense view_vector(const Eigen::VectorXd& v) {
  cholmod_dense d{};
  d.nrow = static_cast<size_t>(v.size());
  d.ncol = 1;
  d.nzmax = d.nrow;
  d.d = d.nrow;
  d.x = const_cast<double*>(v.data());
  d.xtype = CHOLMOD_REAL;
  d.dtype = CHOLMOD_DOUBLE;
  return d;
}

Eigen::VectorXd solve_system(int system, cholmod_factor* factor, const Eigen::VectorXd& b,
                             cholmod_common* common) {
  cholmod_dense rhs = view_vector(b);
  cholmod_dense* x = cholmod_solve(system, factor, &rhs, common);
  if (!x) throw NumericalError("sparse triangular solve failed");
  Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(static_cast<const double*>(x->x), b.size());
  cholmod_free_dense(&x, common);
  return out;
}

SparseMatrix compressed(const SparseMatrix& m) {
  if (m.isCompressed()) return m;
  SparseMatrix c = m;
  c.makeCompressed();
  return c;
}

}  // namespace

SparseFactor::SparseFactor(const SparseMatrix& m) : impl_(std::make_unique<Impl>()) {
  if (m.rows() != m.cols()) throw InvalidArgument("factorization needs a square matrix");
  n_ = static_cast<int>(m.rows());
  const SparseMatrix mc = compressed(m);
  cholmod_sparse a = view_lower(mc);
  impl_->factor = cholmod_analyze(&a, &impl_->common);
  if (!impl_->factor) throw NumericalError("symbolic analysis failed");
  refactorize(mc);
}

SparseFactor::~SparseFactor() = default;
SparseFactor::SparseFactor(SparseFactor&& other) noexcept = default;
SparseFactor& SparseFactor::operator=(SparseFactor&& other) noexcept = default;

void SparseFactor::refactorize(const SparseMatrix& m) {
  if (m.rows() != n_ || m.cols() != n_) throw InvalidArgument("refactorize: matrix size changed");
  const SparseMatrix mc = compressed(m);
  cholmod_sparse a = view_lower(mc);
  cholmod_factorize(&a, impl_->factor, &impl_->common);
  if (impl_->common.status == CHOLMOD_NOT_POSDEF || impl_->factor->minor < impl_->factor->n) {
    const auto pivot = static_cast<std::ptrdiff_t>(impl_->factor->minor);
    throw NumericalError("matrix is not positive definite (failed at pivot " + std::to_string(pivot) + ")",
                         pivot);
  }
  if (impl_->common.status < CHOLMOD_OK) throw NumericalError("sparse Cholesky factorization failed");
  if (!impl_->factor->is_ll)
    cholmod_change_factor(CHOLMOD_REAL, 1, 0, 1, 1, impl_->factor, &impl_->common);
}

Eigen::VectorXd SparseFactor::solve(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw InvalidArgument("solve: right-hand side has wrong length");
  return solve_system(CHOLMOD_A, impl_->factor, b, &impl_->common);
}

Eigen::VectorXd SparseFactor::whiten_inverse(const Eigen::VectorXd& z) const {
  if (z.size() != n_) throw InvalidArgument("whiten_inverse: vector has wrong length");
  const Eigen::VectorXd y = solve_system(CHOLMOD_Lt, impl_->factor, z, &impl_->common);
  return solve_system(CHOLMOD_Pt, impl_->factor, y, &impl_->common);
}

Eigen::VectorXd SparseFactor::sample_gaussian(const Eigen::VectorXd& b, StreamRng& rng) const {
  Eigen::VectorXd z(n_);
  for (int i = 0; i < n_; ++i) z[i] = standard_normal(rng);
  return solve(b) + whiten_inverse(z);
}

double SparseFactor::logdet() const {
  const cholmod_factor* f = impl_->factor;
  const auto* p = static_cast<const int*>(f->p);
  const auto* x = static_cast<const double*>(f->x);
  double sum = 0.0;
  for (int j = 0; j < n_; ++j) sum += std::log(x[p[j]]);
  return 2.0 * sum;
}

}  // namespace gridcomp
