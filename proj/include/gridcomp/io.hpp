#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcomp/estimator.hpp"
#include "gridcomp/grid.hpp"
#include "gridcomp/model.hpp"

namespace gridcomp {

// Maps input row coordinates onto the model grid. Input files address a
// source lattice whose southernmost `omit_south` rows and northernmost
// `omit_north` rows are not modeled: model y = input y - omit_south.
struct RowMask {
  int omit_south = 0;
  int omit_north = 0;
};

struct CountsReadResult {
  std::vector<CellCount> cells;
  long masked_records = 0;  // records dropped by the row mask
};

// Delimited text with header `cell_x,cell_y,<taxon>...` and integer counts.
// A non-empty `taxa` registry fixes the allowed names (header columns outside
// it are rejected); an empty registry is filled from the header.
CountsReadResult read_cell_counts(const std::string& path, const GridSpec& grid, TaxonRegistry& taxa,
                                  const RowMask& mask = {});
void write_cell_counts(const std::string& path, const GridSpec& grid, const TaxonRegistry& taxa,
                       const std::vector<CellCount>& cells);

struct TownshipReadResult {
  std::vector<Township> townships;
  long masked_overlaps = 0;
};

// Trees file: `township_id,taxon`; overlaps file: `township_id,cell_x,cell_y,area`.
// Townships appear in order of first appearance in the trees file. Unknown
// taxa are added to the registry unless `fixed_taxa` is set.
TownshipReadResult read_townships(const std::string& trees_path, const std::string& overlaps_path,
                                  const GridSpec& grid, TaxonRegistry& taxa, bool fixed_taxa,
                                  const RowMask& mask = {});
void write_townships(const std::string& trees_path, const std::string& overlaps_path, const GridSpec& grid,
                     const TaxonRegistry& taxa, const std::vector<Township>& townships);

struct ArchiveHeader {
  std::uint32_t format_version = 1;
  int nx = 0;
  int ny = 0;
  double cell_size = 8000.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<std::string> taxa;
  int num_samples = 0;
  std::uint64_t seed = 0;
  std::string model;
  int t_mc = 0;
  long n_iter = 0;
  long burn_in = 0;
  std::string tool_version;

  std::uint64_t payload_count() const {
    return static_cast<std::uint64_t>(num_samples) * nx * ny * taxa.size();
  }
};

struct SampleArchive {
  ArchiveHeader header;
  PosteriorSamples samples;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

// Fills the geometry, taxa and sample count of a header from the samples.
ArchiveHeader make_archive_header(const PosteriorSamples& samples);

void write_samples(const SampleArchive& archive, const std::string& path);
// Reads and verifies the header block only; the payload is not touched.
ArchiveHeader read_archive_header(const std::string& path);
SampleArchive read_samples(const std::string& path);

// CRC-32 of a whole file as 8 lowercase hex digits.
std::string file_checksum(const std::string& path);

enum class SummaryField { mean, sd, q025, q975 };
const char* to_string(SummaryField field);

// Long format: x,y,taxon,mean,sd,q025,q975, cells in output order.
void write_summary_csv(const PosteriorSummary& summary, const std::string& path);
PosteriorSummary read_summary_csv(const std::string& path);

// One block per taxon: a `# taxon <name>` line then ny rows of nx values.
// The first row printed is y = 0 (the southern edge), values left to right
// in increasing x.
void write_raster(const PosteriorSummary& summary, SummaryField field, const std::string& path);
// Returns one (ny x nx) matrix per taxon; row r holds y = r.
std::vector<Eigen::MatrixXd> read_raster(const std::string& path, std::vector<std::string>* taxa = nullptr);

}  // namespace gridcomp
