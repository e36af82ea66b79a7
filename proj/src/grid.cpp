#include "gridcomp/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "gridcomp/error.hpp"

namespace gridcomp {

bool GridSpec::is_interior(int cell) const {
  if (cell < 0 || cell >= num_cells()) return false;
  const int col = cell % width();
  const int row = cell / width();
  return contains_interior(col - buffer, row - buffer);
}

std::pair<int, int> GridSpec::interior_coords(int cell) const {
  return {cell % width() - buffer, cell / width() - buffer};
}

int GridSpec::output_index(int cell) const {
  const auto [x, y] = interior_coords(cell);
  return y * nx + x;
}

std::vector<int> GridSpec::interior_cells() const {
  std::vector<int> cells;
  cells.reserve(num_interior());
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) cells.push_back(interior_index(x, y));
  return cells;
}

GridSpec build_grid(int nx, int ny, int buffer) {
  if (nx < 1 || ny < 1)
    throw InvalidArgument("grid dimensions must be positive, got " + std::to_string(nx) + "x" +
                          std::to_string(ny));
  if (buffer < 0) throw InvalidArgument("buffer width must be non-negative");
  GridSpec grid;
  grid.nx = nx;
  grid.ny = ny;
  grid.buffer = buffer;
  return grid;
}

int NeighborGraph::degree(int cell, NeighborClass cls) const {
  const auto& adj = adjacency_[cell];
  return static_cast<int>(
      std::count_if(adj.begin(), adj.end(), [cls](const Neighbor& n) { return n.cls == cls; }));
}

NeighborGraph build_neighbor_graph(const GridSpec& grid, NeighborOrder order) {
  struct Offset {
    int dx, dy;
    NeighborClass cls;
  };
  static constexpr std::array<Offset, 12> kStencil{{
      {-1, 0, NeighborClass::cardinal},
      {1, 0, NeighborClass::cardinal},
      {0, -1, NeighborClass::cardinal},
      {0, 1, NeighborClass::cardinal},
      {-1, -1, NeighborClass::diagonal},
      {1, -1, NeighborClass::diagonal},
      {-1, 1, NeighborClass::diagonal},
      {1, 1, NeighborClass::diagonal},
      {-2, 0, NeighborClass::second_order},
      {2, 0, NeighborClass::second_order},
      {0, -2, NeighborClass::second_order},
      {0, 2, NeighborClass::second_order},
  }};
  const std::size_t used = order == NeighborOrder::cardinal ? 4 : kStencil.size();
  const int w = grid.width();
  const int h = grid.height();

  std::vector<std::vector<Neighbor>> adjacency(grid.num_cells());
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      auto& adj = adjacency[grid.index(col, row)];
      for (std::size_t s = 0; s < used; ++s) {
        const int c = col + kStencil[s].dx;
        const int r = row + kStencil[s].dy;
        if (c >= 0 && c < w && r >= 0 && r < h) adj.push_back({grid.index(c, r), kStencil[s].cls});
      }
      std::sort(adj.begin(), adj.end(), [](const Neighbor& a, const Neighbor& b) { return a.cell < b.cell; });
    }
  }
  return NeighborGraph(order, std::move(adjacency));
}

TownshipOverlap normalize_township(const GridSpec& grid, std::string township_id,
                                   std::span<const RawOverlap> raw) {
  double total = 0.0;
  for (const auto& entry : raw) {
    if (!grid.is_interior(entry.cell))
      throw InvalidArgument("township " + township_id + ": cell " + std::to_string(entry.cell) +
                            " is outside the grid");
    if (!(entry.area >= 0.0) || !std::isfinite(entry.area))
      throw InvalidArgument("township " + township_id + ": overlap area must be finite and non-negative");
    total += entry.area;
  }
  if (!(total > 0.0)) throw InvalidArgument("township " + township_id + " has zero total overlap area");

  TownshipOverlap overlap{std::move(township_id), {}};
  for (const auto& entry : raw) {
    if (entry.area == 0.0) continue;
    auto it = std::find_if(overlap.entries.begin(), overlap.entries.end(),
                           [&](const OverlapEntry& e) { return e.cell == entry.cell; });
    if (it != overlap.entries.end())
      it->weight += entry.area / total;
    else
      overlap.entries.push_back({entry.cell, entry.area / total});
  }
  // Remove the rounding residue so the weights sum to one.
  double sum = 0.0;
  for (const auto& e : overlap.entries) sum += e.weight;
  for (auto& e : overlap.entries) e.weight /= sum;
  return overlap;
}

}  // namespace gridcomp
