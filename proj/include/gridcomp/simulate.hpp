#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridcomp/estimator.hpp"
#include "gridcomp/grid.hpp"
#include "gridcomp/model.hpp"
#include "gridcomp/precision.hpp"

namespace gridcomp {

// Generative settings for synthetic datasets.
struct SimulationSettings {
  PrecisionKind model = PrecisionKind::car;
  std::vector<std::string> taxa = {"taxon_a", "taxon_b", "taxon_c"};
  double sigma = 0.5;
  double rho = 5.0;  // spde only
  double mu = 0.0;   // spde only
  int trees_per_cell = 100;
  // Share of cells outside the township rows that receive gridded counts.
  double data_fraction = 1.0;
  // Rows from the south whose trees are reported by township instead of by cell.
  int township_rows = 0;
  // Townships are township_block x township_block squares of cells.
  int township_block = 2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimulatedData {
  Dataset data;
  Eigen::MatrixXd alpha;  // buffered cells x taxa
  RowMatrix truth;        // output cells x taxa, exact probit proportions
};

// Draws alpha_p independently per taxon from the chosen prior on the buffered
// grid (the intrinsic CAR draw is centered to sum to zero), then for each
// populated cell draws trees as argmax of W ~ N(alpha(s), I).
SimulatedData simulate_dataset(const GridSpec& grid, const SimulationSettings& settings);

// Wide CSV: x,y,<taxon>... of the true proportions.
void write_truth_csv(const std::string& path, const GridSpec& grid, const std::vector<std::string>& taxa,
                     const RowMatrix& truth);
RowMatrix read_truth_csv(const std::string& path, const GridSpec& grid, std::vector<std::string>* taxa = nullptr);

}  // namespace gridcomp
