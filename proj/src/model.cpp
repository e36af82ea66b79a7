#include "gridcomp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gridcomp/error.hpp"
#include "gridcomp/random.hpp"

namespace gridcomp {

TaxonRegistry::TaxonRegistry(std::vector<std::string> names) {
  for (const auto& name : names) {
    if (contains(name)) throw InvalidArgument("duplicate taxon '" + name + "'");
    add(name);
  }
}

int TaxonRegistry::add(const std::string& name) {
  if (name.empty()) throw InvalidArgument("taxon names must be non-empty");
  auto it = lookup_.find(name);
  if (it != lookup_.end()) return it->second;
  const int index = size();
  names_.push_back(name);
  lookup_.emplace(name, index);
  return index;
}

int TaxonRegistry::index_of(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw InvalidArgument("unknown taxon '" + name + "'");
  return it->second;
}

int CellCount::total() const {
  int n = 0;
  for (int c : counts) n += c;
  return n;
}

long Dataset::gridded_trees() const {
  long n = 0;
  for (const auto& c : cells) n += c.total();
  return n;
}

long Dataset::township_trees() const {
  long n = 0;
  for (const auto& t : townships) n += static_cast<long>(t.tree_taxa.size());
  return n;
}

void Dataset::validate(const GridSpec& grid) const {
  const int p = num_taxa();
  if (p < 1) throw InvalidArgument("dataset has no taxa");
  std::set<int> seen;
  for (const auto& c : cells) {
    if (!grid.is_interior(c.cell)) throw InvalidArgument("count record outside the grid");
    if (static_cast<int>(c.counts.size()) != p) throw InvalidArgument("count vector length differs from taxon count");
    if (std::any_of(c.counts.begin(), c.counts.end(), [](int v) { return v < 0; }))
      throw InvalidArgument("negative tree count");
    if (!seen.insert(c.cell).second) {
      const auto [x, y] = grid.interior_coords(c.cell);
      throw InvalidArgument("duplicate count record for cell (" + std::to_string(x) + "," + std::to_string(y) + ")");
    }
  }
  for (const auto& t : townships) {
    if (t.tree_taxa.empty()) throw InvalidArgument("township " + t.id + " has no trees");
    for (int taxon : t.tree_taxa)
      if (taxon < 0 || taxon >= p) throw InvalidArgument("township " + t.id + " has a taxon out of range");
    if (t.overlap.entries.empty()) throw InvalidArgument("township " + t.id + " has no overlap entries");
    for (const auto& e : t.overlap.entries)
      if (!grid.is_interior(e.cell)) throw InvalidArgument("township " + t.id + " overlaps a cell outside the grid");
  }
}

void Hyperpriors::validate() const {
  if (!(sigma_upper > 0.0)) throw InvalidArgument("sigma_upper must be positive");
  if (!(mu_bound > 0.0)) throw InvalidArgument("mu_bound must be positive");
  if (!(rho_lower > 0.0)) throw InvalidArgument("rho_lower must be positive");
  if (!(rho_lower < rho_upper)) throw InvalidArgument("rho_lower must be below rho_upper");
}

double multinomial_log_pmf(std::span<const int> y, std::span<const double> theta) {
  if (y.size() != theta.size()) throw InvalidArgument("count and proportion vectors differ in length");
  int n = 0;
  double log_p = 0.0;
  for (std::size_t p = 0; p < y.size(); ++p) {
    if (y[p] < 0) throw InvalidArgument("negative count");
    if (y[p] == 0) continue;
    if (theta[p] <= 0.0) return -std::numeric_limits<double>::infinity();
    n += y[p];
    log_p += y[p] * std::log(theta[p]) - std::lgamma(y[p] + 1.0);
  }
  return log_p + std::lgamma(n + 1.0);
}

double probit_theta_closed_form_p2(double alpha1, double alpha2) {
  return normal_cdf((alpha1 - alpha2) / std::numbers::sqrt2);
}

Eigen::VectorXd probit_theta_quadrature(std::span<const double> alpha) {
  const auto P = static_cast<int>(alpha.size());
  if (P < 1) throw InvalidArgument("need at least one taxon");
  Eigen::VectorXd theta(P);
  if (P == 1) {
    theta[0] = 1.0;
    return theta;
  }
  const auto [lo_it, hi_it] = std::minmax_element(alpha.begin(), alpha.end());
  const double lo = *lo_it - 10.0;
  const double hi = *hi_it + 10.0;
  for (int p = 0; p < P; ++p) {
    auto integrand = [&](double x) {
      double v = normal_pdf(x - alpha[p]);
      for (int q = 0; q < P; ++q)
        if (q != p) v *= normal_cdf(x - alpha[q]);
      return v;
    };
    theta[p] = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, lo, hi, 15, 1e-14);
  }
  theta /= theta.sum();
  return theta;
}

}  // namespace gridcomp
