#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "gridcomp/grid.hpp"

namespace gridcomp {

// Taxon names fixed at ingestion; every matrix column uses the index.
class TaxonRegistry {
 public:
  TaxonRegistry() = default;
  explicit TaxonRegistry(std::vector<std::string> names);

  int add(const std::string& name);  // returns the existing index if present
  int index_of(const std::string& name) const;  // throws InvalidArgument if unknown
  bool contains(const std::string& name) const { return lookup_.count(name) != 0; }
  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> lookup_;
};

// Tree counts of one gridded cell; n = sum of counts.
struct CellCount {
  int cell;  // global cell index (interior)
  std::vector<int> counts;
  int total() const;
};

// Trees recorded at township level, with unknown cell locations.
struct Township {
  std::string id;
  std::vector<int> tree_taxa;  // taxon index per tree
  TownshipOverlap overlap;
};

struct Dataset {
  TaxonRegistry taxa;
  std::vector<CellCount> cells;
  std::vector<Township> townships;

  int num_taxa() const { return taxa.size(); }
  long gridded_trees() const;
  long township_trees() const;
  // Checks count lengths, taxon ranges, non-empty townships and unique cells.
  void validate(const GridSpec& grid) const;
};

struct Hyperpriors {
  double sigma_upper = 1000.0;  // sigma ~ U(0, sigma_upper)
  double mu_bound = 10.0;       // mu ~ U(-mu_bound, mu_bound)
  double rho_lower = 0.1;       // rho ~ U(rho_lower, rho_upper)
  double rho_upper = 148.4131591025766;  // e^5

  void validate() const;
};

// log of the multinomial probability of counts y under proportions theta,
// including the multinomial coefficient. -inf when a positive count meets a
// zero proportion.
double multinomial_log_pmf(std::span<const int> y, std::span<const double> theta);

// P(W1 > W2) for W_p ~ N(alpha_p, 1) independent: Phi((alpha1 - alpha2) / sqrt 2).
double probit_theta_closed_form_p2(double alpha1, double alpha2);

// Multinomial-probit proportions for any P by one-dimensional adaptive
// quadrature of phi(x - alpha_p) prod_{q != p} Phi(x - alpha_q).
Eigen::VectorXd probit_theta_quadrature(std::span<const double> alpha);

}  // namespace gridcomp
