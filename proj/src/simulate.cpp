#include "gridcomp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <boost/random/uniform_int_distribution.hpp>

#include "gridcomp/error.hpp"
#include "gridcomp/random.hpp"
#include "text.hpp"

namespace gridcomp {

void SimulationSettings::validate() const {
  if (taxa.size() < 2) throw InvalidArgument("simulation needs at least two taxa");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sim_sigma must be finite and >= 0");
  if (model == PrecisionKind::spde && !(rho > 0.0)) throw InvalidArgument("sim_rho must be positive");
  if (!std::isfinite(mu)) throw InvalidArgument("sim_mu must be finite");
  if (trees_per_cell < 0) throw InvalidArgument("sim_trees_per_cell must be >= 0");
  if (!(data_fraction >= 0.0 && data_fraction <= 1.0)) throw InvalidArgument("sim_data_fraction must lie in [0, 1]");
  if (township_rows < 0) throw InvalidArgument("sim_township_rows must be >= 0");
  if (township_block < 1) throw InvalidArgument("sim_township_block must be >= 1");
}

namespace {

Eigen::VectorXd draw_field(const GridSpec& grid, const SimulationSettings& s, StreamRng& rng) {
  const int m = grid.num_cells();
  if (s.sigma == 0.0) return Eigen::VectorXd::Constant(m, s.model == PrecisionKind::spde ? s.mu : 0.0);
  if (s.model == PrecisionKind::iid) {
    Eigen::VectorXd x(m);
    for (int i = 0; i < m; ++i) x[i] = s.sigma * standard_normal(rng);
    return x;
  }
  const auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(grid, required_order(s.model)));
  PrecisionModel model{s.model, graph, s.sigma * s.sigma, s.rho, s.mu};
  SparseMatrix q = effective_precision(model);
  if (s.model == PrecisionKind::car) {
    // The intrinsic prior is improper along the constant vector; a tiny
    // ridge makes it factorizable and centering removes that direction.
    const double ridge = 1e-8 / (s.sigma * s.sigma);
    for (int i = 0; i < m; ++i) q.coeffRef(i, i) += ridge;
    const SparseFactor factor(q);
    Eigen::VectorXd x = factor.sample_gaussian(Eigen::VectorXd::Zero(m), rng);
    return x.array() - x.mean();
  }
  const SparseFactor factor(q);
  return factor.sample_gaussian(q * Eigen::VectorXd::Constant(m, s.mu), rng);
}

std::vector<int> draw_trees(StreamRng& rng, const Eigen::Ref<const Eigen::RowVectorXd>& alpha, int n) {
  std::vector<int> counts(static_cast<std::size_t>(alpha.size()), 0);
  for (int t = 0; t < n; ++t) {
    int best = 0;
    double best_w = -std::numeric_limits<double>::infinity();
    for (Eigen::Index p = 0; p < alpha.size(); ++p) {
      const double w = alpha[p] + standard_normal(rng);
      if (w > best_w) {
        best_w = w;
        best = static_cast<int>(p);
      }
    }
    ++counts[static_cast<std::size_t>(best)];
  }
  return counts;
}

}  // namespace

SimulatedData simulate_dataset(const GridSpec& grid, const SimulationSettings& s) {
  s.validate();
  const int P = static_cast<int>(s.taxa.size());
  SimulatedData out;
  out.data.taxa = TaxonRegistry(s.taxa);
  out.alpha.resize(grid.num_cells(), P);
  for (int p = 0; p < P; ++p) {
    StreamRng rng = make_stream(s.seed, Stream::simulate, 0, static_cast<std::uint64_t>(p));
    out.alpha.col(p) = draw_field(grid, s, rng);
  }

  const auto interior = grid.interior_cells();
  out.truth.resize(static_cast<Eigen::Index>(interior.size()), P);
  for (std::size_t o = 0; o < interior.size(); ++o) {
    const Eigen::VectorXd a = out.alpha.row(interior[o]).transpose();
    out.truth.row(static_cast<Eigen::Index>(o)) = probit_theta_quadrature({a.data(), static_cast<std::size_t>(P)}).transpose();
  }

  std::vector<int> gridded;
  std::map<std::pair<int, int>, std::vector<int>> township_cells;
  for (int cell : interior) {
    const auto [x, y] = grid.interior_coords(cell);
    if (y < s.township_rows)
      township_cells[{y / s.township_block, x / s.township_block}].push_back(cell);
    else
      gridded.push_back(cell);
  }

  // Which gridded cells carry data: a uniformly chosen subset.
  const auto keep = static_cast<std::size_t>(std::llround(s.data_fraction * static_cast<double>(gridded.size())));
  {
    StreamRng rng = make_stream(s.seed, Stream::simulate, 2, 0);
    for (std::size_t i = 0; i < keep; ++i) {
      boost::random::uniform_int_distribution<std::size_t> pick(i, gridded.size() - 1);
      std::swap(gridded[i], gridded[pick(rng)]);
    }
    gridded.resize(keep);
    std::sort(gridded.begin(), gridded.end());
  }
  for (int cell : gridded) {
    StreamRng rng = make_stream(s.seed, Stream::simulate, 1, static_cast<std::uint64_t>(cell));
    out.data.cells.push_back({cell, draw_trees(rng, out.alpha.row(cell), s.trees_per_cell)});
  }

  for (const auto& [key, cells] : township_cells) {
    Township t;
    t.id = "T" + std::to_string(key.first) + "_" + std::to_string(key.second);
    std::vector<RawOverlap> raw;
    for (int cell : cells) {
      raw.push_back({cell, 1.0});
      StreamRng rng = make_stream(s.seed, Stream::simulate, 1, static_cast<std::uint64_t>(cell));
      const auto counts = draw_trees(rng, out.alpha.row(cell), s.trees_per_cell);
      for (int p = 0; p < P; ++p) t.tree_taxa.insert(t.tree_taxa.end(), counts[p], p);
    }
    if (t.tree_taxa.empty()) continue;
    t.overlap = normalize_township(grid, t.id, raw);
    out.data.townships.push_back(std::move(t));
  }
  return out;
}

void write_truth_csv(const std::string& path, const GridSpec& grid, const std::vector<std::string>& taxa,
                     const RowMatrix& truth) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "x,y";
  for (const auto& t : taxa) out << ',' << t;
  out << '\n';
  for (Eigen::Index o = 0; o < truth.rows(); ++o) {
    out << o % grid.nx << ',' << o / grid.nx;
    for (Eigen::Index p = 0; p < truth.cols(); ++p) out << ',' << truth(o, p);
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

RowMatrix read_truth_csv(const std::string& path, const GridSpec& grid, std::vector<std::string>* taxa) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header line");
  auto header = detail::split_fields(line);
  if (header.size() < 3 || header[0] != "x" || header[1] != "y") throw ParseError(path, 1, "header must start with x,y");
  const auto P = static_cast<Eigen::Index>(header.size() - 2);
  RowMatrix truth = RowMatrix::Constant(grid.num_interior(), P, std::numeric_limits<double>::quiet_NaN());
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line);
    if (static_cast<Eigen::Index>(f.size()) != P + 2) throw ParseError(path, line_no, "wrong number of fields");
    const auto x = detail::parse_number<int>(f[0]);
    const auto y = detail::parse_number<int>(f[1]);
    if (!x || !y || !grid.contains_interior(*x, *y)) throw ParseError(path, line_no, "bad cell coordinates");
    for (Eigen::Index p = 0; p < P; ++p) {
      const auto v = detail::parse_number<double>(f[static_cast<std::size_t>(p + 2)]);
      if (!v) throw ParseError(path, line_no, "bad proportion");
      truth(*y * grid.nx + *x, p) = *v;
    }
  }
  if (truth.hasNaN()) throw ParseError(path, line_no, "truth file does not cover every cell");
  if (taxa) taxa->assign(header.begin() + 2, header.end());
  return truth;
}

}  // namespace gridcomp
