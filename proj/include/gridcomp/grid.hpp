#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gridcomp {

// Rectangular lattice of square cells surrounded by a ring of `buffer` cells
// on every side. Cells are indexed row-major from the southwest corner of the
// buffered lattice: index = row * width() + col. "Interior" coordinates
// (x, y) address the unbuffered domain, with (0, 0) its southwest cell.
struct GridSpec {
  int nx = 1;
  int ny = 1;
  int buffer = 0;
  // Metadata only; the model depends on lattice topology alone.
  double cell_size = 8000.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  int width() const { return nx + 2 * buffer; }
  int height() const { return ny + 2 * buffer; }
  int num_cells() const { return width() * height(); }
  int num_interior() const { return nx * ny; }

  int index(int col, int row) const { return row * width() + col; }
  int interior_index(int x, int y) const { return index(x + buffer, y + buffer); }
  bool contains_interior(int x, int y) const { return x >= 0 && x < nx && y >= 0 && y < ny; }
  bool is_interior(int cell) const;
  // Unbuffered (x, y) of an interior cell.
  std::pair<int, int> interior_coords(int cell) const;
  // Position of an interior cell in the unbuffered row-major output order.
  int output_index(int cell) const;
  // Global indices of the interior cells in output order.
  std::vector<int> interior_cells() const;
};

GridSpec build_grid(int nx, int ny, int buffer);

enum class NeighborOrder { cardinal, extended };

enum class NeighborClass : std::uint8_t { cardinal, diagonal, second_order };

struct Neighbor {
  int cell;
  NeighborClass cls;
};

// Symmetric lattice adjacency. The cardinal order holds the four edge-sharing
// neighbors; the extended order adds the diagonal and the (+-2, 0), (0, +-2)
// cells, matching the footprint of the SPDE precision stencil.
class NeighborGraph {
 public:
  NeighborGraph(NeighborOrder order, std::vector<std::vector<Neighbor>> adjacency)
      : order_(order), adjacency_(std::move(adjacency)) {}

  NeighborOrder order() const { return order_; }
  int num_cells() const { return static_cast<int>(adjacency_.size()); }
  std::span<const Neighbor> neighbors(int cell) const { return adjacency_[cell]; }
  int degree(int cell, NeighborClass cls) const;

 private:
  NeighborOrder order_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

NeighborGraph build_neighbor_graph(const GridSpec& grid, NeighborOrder order);

struct OverlapEntry {
  int cell;  // global cell index, always interior
  double weight;
};

// Prior membership weights of one township over the grid cells it overlaps.
struct TownshipOverlap {
  std::string township_id;
  std::vector<OverlapEntry> entries;
};

struct RawOverlap {
  int cell;
  double area;
};

// Normalizes areal overlaps to weights summing to one; zero-area entries are
// dropped. Rejects cells outside the unbuffered domain and all-zero areas.
TownshipOverlap normalize_township(const GridSpec& grid, std::string township_id,
                                   std::span<const RawOverlap> raw);

}  // namespace gridcomp
