#include "gridcomp/precision.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "gridcomp/error.hpp"

namespace gridcomp {

namespace {

SparseMatrix adjacency_of_class(const NeighborGraph& graph, NeighborClass cls) {
  const int m = graph.num_cells();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < m; ++i)
    for (const auto& nb : graph.neighbors(i))
      if (nb.cls == cls) triplets.emplace_back(i, nb.cell, 1.0);
  SparseMatrix adj(m, m);
  adj.setFromTriplets(triplets.begin(), triplets.end());
  return adj;
}

SparseMatrix identity(int m) {
  SparseMatrix id(m, m);
  id.setIdentity();
  return id;
}

}  // namespace

std::string_view to_string(PrecisionKind kind) {
  switch (kind) {
    case PrecisionKind::car: return "car";
    case PrecisionKind::spde: return "spde";
    case PrecisionKind::iid: return "iid";
  }
  return "unknown";
}

PrecisionKind parse_precision_kind(std::string_view text) {
  if (text == "car" || text == "CAR") return PrecisionKind::car;
  if (text == "spde" || text == "SPDE") return PrecisionKind::spde;
  if (text == "iid" || text == "IID") return PrecisionKind::iid;
  throw InvalidArgument("unknown model kind '" + std::string(text) + "' (expected car, spde or iid)");
}

NeighborOrder required_order(PrecisionKind kind) {
  return kind == PrecisionKind::spde ? NeighborOrder::extended : NeighborOrder::cardinal;
}

SparseMatrix build_car_structure(const NeighborGraph& graph) {
  if (graph.order() != NeighborOrder::cardinal)
    throw InvalidArgument("CAR structure needs a cardinal-order neighbor graph");
  const int m = graph.num_cells();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < m; ++i) {
    const auto nbs = graph.neighbors(i);
    triplets.emplace_back(i, i, static_cast<double>(nbs.size()));
    for (const auto& nb : nbs) triplets.emplace_back(i, nb.cell, -1.0);
  }
  SparseMatrix q(m, m);
  q.setFromTriplets(triplets.begin(), triplets.end());
  return q;
}

SparseMatrix build_spde_structure(const NeighborGraph& graph, double rho) {
  if (graph.order() != NeighborOrder::extended)
    throw InvalidArgument("SPDE structure needs an extended-order neighbor graph");
  if (!(rho > 0.0)) throw InvalidArgument("SPDE range rho must be positive");
  const double a = 4.0 + 1.0 / (rho * rho);
  const int m = graph.num_cells();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < m; ++i) {
    triplets.emplace_back(i, i, 4.0 + a * a);
    for (const auto& nb : graph.neighbors(i)) {
      switch (nb.cls) {
        case NeighborClass::cardinal: triplets.emplace_back(i, nb.cell, -2.0 * a); break;
        case NeighborClass::diagonal: triplets.emplace_back(i, nb.cell, 2.0); break;
        case NeighborClass::second_order: triplets.emplace_back(i, nb.cell, 1.0); break;
      }
    }
  }
  SparseMatrix q(m, m);
  q.setFromTriplets(triplets.begin(), triplets.end());
  return q;
}

SparseMatrix effective_precision(const PrecisionModel& model) {
  if (!model.graph) throw InvalidArgument("precision model has no neighbor graph");
  if (!(model.sigma2 > 0.0)) throw InvalidArgument("sigma^2 must be positive");
  switch (model.kind) {
    case PrecisionKind::car: return build_car_structure(*model.graph) / model.sigma2;
    case PrecisionKind::iid: return identity(model.graph->num_cells()) / model.sigma2;
    case PrecisionKind::spde: {
      const double scale = model.sigma2 * 4.0 * std::numbers::pi / (model.rho * model.rho);
      return build_spde_structure(*model.graph, model.rho) / scale;
    }
  }
  throw InvalidArgument("unknown precision kind");
}

double generalized_logdet_icar(const SparseMatrix& structure, double sigma2, int m) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("sigma^2 must be positive");
  if (structure.rows() != m) throw InvalidArgument("structure matrix size does not match m");
  return (m - 1) * std::log(1.0 / sigma2);
}

double matern_correlation(double d, double rho, double nu) {
  if (!(d >= 0.0) || !(rho > 0.0) || !(nu > 0.0))
    throw InvalidArgument("Matern correlation needs d >= 0, rho > 0 and nu > 0");
  if (d == 0.0) return 1.0;
  const double u = 2.0 * std::sqrt(nu) * d / rho;
  if (u > 700.0) return 0.0;
  return std::pow(u, nu) * std::cyl_bessel_k(nu, u) / (std::tgamma(nu) * std::pow(2.0, nu - 1.0));
}

PrecisionStructure::PrecisionStructure(PrecisionKind kind, const NeighborGraph& graph)
    : kind_(kind), identity_(identity(graph.num_cells())) {
  if (graph.order() != required_order(kind))
    throw InvalidArgument("neighbor graph order does not match the " + std::string(to_string(kind)) +
                          " model");
  switch (kind) {
    case PrecisionKind::car: fixed_ = build_car_structure(graph); break;
    case PrecisionKind::iid: fixed_ = identity_; break;
    case PrecisionKind::spde:
      cardinal_ = adjacency_of_class(graph, NeighborClass::cardinal);
      diagonal_ = adjacency_of_class(graph, NeighborClass::diagonal);
      second_order_ = adjacency_of_class(graph, NeighborClass::second_order);
      break;
  }
}

SparseMatrix PrecisionStructure::structure(double rho) const {
  if (kind_ != PrecisionKind::spde) return fixed_;
  if (!(rho > 0.0)) throw InvalidArgument("SPDE range rho must be positive");
  const double a = 4.0 + 1.0 / (rho * rho);
  SparseMatrix q = (4.0 + a * a) * identity_ - (2.0 * a) * cardinal_ + 2.0 * diagonal_ + second_order_;
  return q;
}

double PrecisionStructure::scale(double sigma2, double rho) const {
  if (!(sigma2 > 0.0)) throw InvalidArgument("sigma^2 must be positive");
  if (kind_ != PrecisionKind::spde) return sigma2;
  return sigma2 * 4.0 * std::numbers::pi / (rho * rho);
}

SparseMatrix PrecisionStructure::effective(double sigma2, double rho) const {
  SparseMatrix q = structure(rho) / scale(sigma2, rho);
  return q;
}

double PrecisionStructure::log_gdet(double sigma2, double rho, double logdet_structure) const {
  const int m = size();
  switch (kind_) {
    case PrecisionKind::car: return (m - 1) * std::log(1.0 / sigma2);
    case PrecisionKind::iid: return m * std::log(1.0 / sigma2);
    case PrecisionKind::spde: return logdet_structure - m * std::log(scale(sigma2, rho));
  }
  return 0.0;
}

}  // namespace gridcomp
