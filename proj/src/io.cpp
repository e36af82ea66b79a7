#include "gridcomp/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "gridcomp/error.hpp"
#include "gridcomp/version.hpp"
#include "json.hpp"
#include "text.hpp"

namespace gridcomp {

namespace {

constexpr char kArchiveMagic[8] = {'G', 'C', 'O', 'M', 'P', 'A', 'R', 'C'};
constexpr std::size_t kPreamble = sizeof kArchiveMagic + 2 * sizeof(std::uint32_t);

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

// Iterates data lines of a headed CSV file, skipping blank lines.
class CsvReader {
 public:
  explicit CsvReader(const std::string& path) : path_(path), in_(open_input(path)) {}

  // Returns false at end of file; `fields` holds the trimmed fields.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (detail::trim(line).empty()) continue;
      fields = detail::split_fields(line);
      return true;
    }
    return false;
  }
  std::size_t line() const { return line_no_; }
  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(path_, line_no_, msg); }

  template <class T>
  T number(const std::string& field, const char* what) const {
    const auto v = detail::parse_number<T>(field);
    if (!v) fail(std::string("invalid ") + what + " '" + field + "'");
    return *v;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

void expect_header(CsvReader& reader, const std::vector<std::string>& expected, std::vector<std::string>& fields) {
  if (!reader.next(fields)) reader.fail("missing header line");
  if (fields.size() < expected.size() || !std::equal(expected.begin(), expected.end(), fields.begin())) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    reader.fail("header must start with " + want);
  }
}

// Converts input coordinates to a model cell; nullopt when the row is masked.
std::optional<int> locate_cell(const CsvReader& reader, const GridSpec& grid, const RowMask& mask, int x, int y) {
  const int source_rows = mask.omit_south + grid.ny + mask.omit_north;
  if (x < 0 || x >= grid.nx || y < 0 || y >= source_rows)
    reader.fail("cell (" + std::to_string(x) + "," + std::to_string(y) + ") is outside the grid");
  const int model_y = y - mask.omit_south;
  if (model_y < 0 || model_y >= grid.ny) return std::nullopt;
  return grid.interior_index(x, model_y);
}

std::string coords_of(const GridSpec& grid, int cell) {
  const auto [x, y] = grid.interior_coords(cell);
  return std::to_string(x) + "," + std::to_string(y);
}

}  // namespace

CountsReadResult read_cell_counts(const std::string& path, const GridSpec& grid, TaxonRegistry& taxa,
                                  const RowMask& mask) {
  CsvReader reader(path);
  std::vector<std::string> fields;
  expect_header(reader, {"cell_x", "cell_y"}, fields);
  const bool fixed = taxa.size() > 0;
  std::vector<int> column_taxon;
  std::set<std::string> header_names;
  for (std::size_t c = 2; c < fields.size(); ++c) {
    const std::string& name = fields[c];
    if (name.empty()) reader.fail("empty taxon name in header");
    if (!header_names.insert(name).second) reader.fail("taxon '" + name + "' appears twice in the header");
    if (fixed && !taxa.contains(name)) reader.fail("unknown taxon '" + name + "'");
    column_taxon.push_back(fixed ? taxa.index_of(name) : taxa.add(name));
  }

  CountsReadResult result;
  std::map<int, std::size_t> seen;
  while (reader.next(fields)) {
    if (fields.size() != column_taxon.size() + 2)
      reader.fail("expected " + std::to_string(column_taxon.size() + 2) + " fields, found " +
                  std::to_string(fields.size()));
    const int x = reader.number<int>(fields[0], "cell_x");
    const int y = reader.number<int>(fields[1], "cell_y");
    const auto cell = locate_cell(reader, grid, mask, x, y);
    CellCount record{cell.value_or(-1), std::vector<int>(static_cast<std::size_t>(taxa.size()), 0)};
    for (std::size_t c = 0; c < column_taxon.size(); ++c) {
      const int v = reader.number<int>(fields[c + 2], "count");
      if (v < 0)
        throw InvalidArgument(path + ":" + std::to_string(reader.line()) + ": negative count for taxon '" +
                              taxa.name(column_taxon[c]) + "'");
      record.counts[static_cast<std::size_t>(column_taxon[c])] = v;
    }
    if (!cell) {
      ++result.masked_records;
      continue;
    }
    if (!seen.emplace(*cell, reader.line()).second)
      reader.fail("duplicate record for cell (" + std::to_string(x) + "," + std::to_string(y) + "), first seen on line " +
                  std::to_string(seen[*cell]));
    result.cells.push_back(std::move(record));
  }
  // Taxa registered after a record was built (never happens for a single
  // file, but a shared registry may grow) are padded with zeros.
  for (auto& r : result.cells) r.counts.resize(static_cast<std::size_t>(taxa.size()), 0);
  return result;
}

void write_cell_counts(const std::string& path, const GridSpec& grid, const TaxonRegistry& taxa,
                       const std::vector<CellCount>& cells) {
  auto out = open_output(path);
  out << "cell_x,cell_y";
  for (const auto& name : taxa.names()) out << ',' << name;
  out << '\n';
  for (const auto& r : cells) {
    out << coords_of(grid, r.cell);
    for (int v : r.counts) out << ',' << v;
    out << '\n';
  }
  finish_output(out, path);
}

TownshipReadResult read_townships(const std::string& trees_path, const std::string& overlaps_path,
                                  const GridSpec& grid, TaxonRegistry& taxa, bool fixed_taxa, const RowMask& mask) {
  std::vector<std::string> fields;
  std::vector<std::string> order;
  std::map<std::string, std::vector<int>> trees;
  {
    CsvReader reader(trees_path);
    expect_header(reader, {"township_id", "taxon"}, fields);
    while (reader.next(fields)) {
      if (fields.size() != 2) reader.fail("expected 2 fields, found " + std::to_string(fields.size()));
      if (fields[0].empty()) reader.fail("empty township id");
      if (fields[1].empty()) reader.fail("empty taxon name");
      if (fixed_taxa && !taxa.contains(fields[1])) reader.fail("unknown taxon '" + fields[1] + "'");
      const int taxon = taxa.add(fields[1]);
      auto [it, inserted] = trees.try_emplace(fields[0]);
      if (inserted) order.push_back(fields[0]);
      it->second.push_back(taxon);
    }
  }

  TownshipReadResult result;
  std::map<std::string, std::vector<RawOverlap>> raw;
  {
    CsvReader reader(overlaps_path);
    expect_header(reader, {"township_id", "cell_x", "cell_y", "area"}, fields);
    while (reader.next(fields)) {
      if (fields.size() != 4) reader.fail("expected 4 fields, found " + std::to_string(fields.size()));
      if (fields[0].empty()) reader.fail("empty township id");
      const int x = reader.number<int>(fields[1], "cell_x");
      const int y = reader.number<int>(fields[2], "cell_y");
      const double area = reader.number<double>(fields[3], "area");
      if (!std::isfinite(area) || area < 0.0)
        throw InvalidArgument(overlaps_path + ":" + std::to_string(reader.line()) + ": area must be finite and >= 0");
      const auto cell = locate_cell(reader, grid, mask, x, y);
      if (!cell) {
        ++result.masked_overlaps;
        continue;
      }
      raw[fields[0]].push_back({*cell, area});
    }
  }

  for (const auto& id : order) {
    const auto it = raw.find(id);
    if (it == raw.end())
      throw InvalidArgument("township " + id + " has trees in " + trees_path + " but no overlap entries in " +
                            overlaps_path);
    Township t;
    t.id = id;
    t.tree_taxa = trees[id];
    try {
      t.overlap = normalize_township(grid, id, it->second);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(overlaps_path + ": " + e.what());
    }
    result.townships.push_back(std::move(t));
  }
  return result;
}

void write_townships(const std::string& trees_path, const std::string& overlaps_path, const GridSpec& grid,
                     const TaxonRegistry& taxa, const std::vector<Township>& townships) {
  auto trees = open_output(trees_path);
  trees << "township_id,taxon\n";
  for (const auto& t : townships)
    for (int taxon : t.tree_taxa) trees << t.id << ',' << taxa.name(taxon) << '\n';
  finish_output(trees, trees_path);

  auto overlaps = open_output(overlaps_path);
  overlaps << "township_id,cell_x,cell_y,area\n";
  for (const auto& t : townships)
    for (const auto& e : t.overlap.entries)
      overlaps << t.overlap.township_id << ',' << coords_of(grid, e.cell) << ',' << format_double(e.weight) << '\n';
  finish_output(overlaps, overlaps_path);
}

ArchiveHeader make_archive_header(const PosteriorSamples& samples) {
  ArchiveHeader h;
  h.format_version = kArchiveVersion;
  h.nx = samples.grid.nx;
  h.ny = samples.grid.ny;
  h.cell_size = samples.grid.cell_size;
  h.origin_x = samples.grid.origin_x;
  h.origin_y = samples.grid.origin_y;
  h.taxa = samples.taxa;
  h.num_samples = samples.num_samples;
  h.tool_version = kVersion;
  return h;
}

void write_samples(const SampleArchive& archive, const std::string& path) {
  const ArchiveHeader& h = archive.header;
  const PosteriorSamples& s = archive.samples;
  if (h.nx != s.grid.nx || h.ny != s.grid.ny || h.taxa != s.taxa || h.num_samples != s.num_samples)
    throw InvalidArgument("archive header does not describe its samples");
  if (s.values.size() != h.payload_count()) throw InvalidArgument("sample payload has the wrong length");

  const nlohmann::json header = {{"format_version", kArchiveVersion},
                                 {"nx", h.nx},
                                 {"ny", h.ny},
                                 {"cell_size", h.cell_size},
                                 {"origin_x", h.origin_x},
                                 {"origin_y", h.origin_y},
                                 {"taxa", h.taxa},
                                 {"num_samples", h.num_samples},
                                 {"seed", h.seed},
                                 {"model", h.model},
                                 {"t_mc", h.t_mc},
                                 {"n_iter", h.n_iter},
                                 {"burn_in", h.burn_in},
                                 {"tool_version", h.tool_version},
                                 {"layout", "float64 little-endian [sample][y][x][taxon]"},
                                 {"payload_count", h.payload_count()}};
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.put_raw(kArchiveMagic, sizeof kArchiveMagic);
  w.put(kArchiveVersion);
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_raw(text.data(), text.size());
  w.put(detail::crc32(w.bytes().data(), w.bytes().size()));
  const std::size_t payload_start = w.bytes().size();
  w.put_raw(s.values.data(), s.values.size() * sizeof(double));
  w.put(detail::crc32(w.bytes().data() + payload_start, w.bytes().size() - payload_start));

  auto out = open_output(path, std::ios::binary);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  finish_output(out, path);
}

namespace {

ArchiveHeader read_header_from(std::istream& in, const std::string& path, std::size_t& header_bytes) {
  char pre[kPreamble];
  if (!in.read(pre, sizeof pre)) throw IoError(path + ": truncated archive header");
  if (std::memcmp(pre, kArchiveMagic, sizeof kArchiveMagic) != 0) throw IoError(path + ": not a sample archive");
  std::uint32_t version;
  std::uint32_t length;
  std::memcpy(&version, pre + sizeof kArchiveMagic, sizeof version);
  std::memcpy(&length, pre + sizeof kArchiveMagic + sizeof version, sizeof length);
  if (version != kArchiveVersion)
    throw IoError(path + ": incompatible archive format version " + std::to_string(version) + " (this build reads " +
                  std::to_string(kArchiveVersion) + ")");
  std::vector<char> block(kPreamble + length);
  std::memcpy(block.data(), pre, kPreamble);
  std::uint32_t stored;
  if (!in.read(block.data() + kPreamble, length) || !in.read(reinterpret_cast<char*>(&stored), sizeof stored))
    throw IoError(path + ": truncated archive header");
  if (detail::crc32(block.data(), block.size()) != stored) throw IoError(path + ": archive header checksum mismatch");
  header_bytes = block.size() + sizeof stored;

  ArchiveHeader h;
  try {
    const auto j = nlohmann::json::parse(block.begin() + kPreamble, block.end());
    h.format_version = j.at("format_version").get<std::uint32_t>();
    h.nx = j.at("nx").get<int>();
    h.ny = j.at("ny").get<int>();
    h.cell_size = j.at("cell_size").get<double>();
    h.origin_x = j.at("origin_x").get<double>();
    h.origin_y = j.at("origin_y").get<double>();
    h.taxa = j.at("taxa").get<std::vector<std::string>>();
    h.num_samples = j.at("num_samples").get<int>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.model = j.at("model").get<std::string>();
    h.t_mc = j.at("t_mc").get<int>();
    h.n_iter = j.at("n_iter").get<long>();
    h.burn_in = j.at("burn_in").get<long>();
    h.tool_version = j.at("tool_version").get<std::string>();
    if (j.at("payload_count").get<std::uint64_t>() != h.payload_count())
      throw IoError(path + ": payload count disagrees with the header dimensions");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed archive header: " + e.what());
  }
  if (h.nx < 1 || h.ny < 1 || h.num_samples < 0) throw IoError(path + ": invalid archive dimensions");
  return h;
}

}  // namespace

ArchiveHeader read_archive_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::size_t header_bytes = 0;
  return read_header_from(in, path, header_bytes);
}

SampleArchive read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::size_t header_bytes = 0;
  SampleArchive a;
  a.header = read_header_from(in, path, header_bytes);
  const ArchiveHeader& h = a.header;
  a.samples.grid = build_grid(h.nx, h.ny, 0);
  a.samples.grid.cell_size = h.cell_size;
  a.samples.grid.origin_x = h.origin_x;
  a.samples.grid.origin_y = h.origin_y;
  a.samples.taxa = h.taxa;
  a.samples.num_samples = h.num_samples;
  a.samples.values.resize(h.payload_count());
  const auto payload_bytes = static_cast<std::streamsize>(a.samples.values.size() * sizeof(double));
  std::uint32_t stored;
  if (!in.read(reinterpret_cast<char*>(a.samples.values.data()), payload_bytes) ||
      !in.read(reinterpret_cast<char*>(&stored), sizeof stored))
    throw IoError(path + ": truncated archive payload");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after archive payload");
  if (detail::crc32(reinterpret_cast<const char*>(a.samples.values.data()), static_cast<std::size_t>(payload_bytes)) !=
      stored)
    throw IoError(path + ": archive payload checksum mismatch");
  return a;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  boost::crc_32_type crc;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) crc.process_bytes(buf, static_cast<std::size_t>(in.gcount()));
  std::ostringstream out;
  out << std::hex << std::setw(8) << std::setfill('0') << crc.checksum();
  return out.str();
}

const char* to_string(SummaryField field) {
  switch (field) {
    case SummaryField::mean: return "mean";
    case SummaryField::sd: return "sd";
    case SummaryField::q025: return "q025";
    case SummaryField::q975: return "q975";
  }
  return "?";
}

namespace {

const Eigen::MatrixXd& field_of(const PosteriorSummary& s, SummaryField f) {
  switch (f) {
    case SummaryField::mean: return s.mean;
    case SummaryField::sd: return s.sd;
    case SummaryField::q025: return s.q025;
    case SummaryField::q975: return s.q975;
  }
  return s.mean;
}

}  // namespace

void write_summary_csv(const PosteriorSummary& summary, const std::string& path) {
  auto out = open_output(path);
  out << "x,y,taxon,mean,sd,q025,q975\n";
  const int nx = summary.grid.nx;
  for (Eigen::Index o = 0; o < summary.mean.rows(); ++o)
    for (Eigen::Index p = 0; p < summary.mean.cols(); ++p)
      out << o % nx << ',' << o / nx << ',' << summary.taxa[static_cast<std::size_t>(p)] << ','
          << format_double(summary.mean(o, p)) << ',' << format_double(summary.sd(o, p)) << ','
          << format_double(summary.q025(o, p)) << ',' << format_double(summary.q975(o, p)) << '\n';
  finish_output(out, path);
}

PosteriorSummary read_summary_csv(const std::string& path) {
  CsvReader reader(path);
  std::vector<std::string> fields;
  expect_header(reader, {"x", "y", "taxon", "mean", "sd", "q025", "q975"}, fields);
  struct Row {
    int x, y, taxon;
    double v[4];
  };
  std::vector<Row> rows;
  TaxonRegistry taxa;
  int nx = 0;
  int ny = 0;
  while (reader.next(fields)) {
    if (fields.size() != 7) reader.fail("expected 7 fields, found " + std::to_string(fields.size()));
    Row r{reader.number<int>(fields[0], "x"), reader.number<int>(fields[1], "y"), taxa.add(fields[2]), {}};
    if (r.x < 0 || r.y < 0) reader.fail("negative cell coordinate");
    for (int k = 0; k < 4; ++k) r.v[k] = reader.number<double>(fields[3 + k], "value");
    nx = std::max(nx, r.x + 1);
    ny = std::max(ny, r.y + 1);
    rows.push_back(r);
  }
  if (rows.empty()) throw ParseError(path, reader.line(), "summary has no rows");
  const auto expected = static_cast<std::size_t>(nx) * ny * taxa.size();
  if (rows.size() != expected) throw ParseError(path, reader.line(), "summary does not cover a full grid");
  PosteriorSummary s;
  s.grid = build_grid(nx, ny, 0);
  s.taxa = taxa.names();
  Eigen::MatrixXd* targets[4] = {&s.mean, &s.sd, &s.q025, &s.q975};
  for (auto* m : targets) m->setConstant(nx * ny, taxa.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : rows) {
    const int o = r.y * nx + r.x;
    if (!std::isnan(s.mean(o, r.taxon)))
      throw ParseError(path, 0, "duplicate row for cell (" + std::to_string(r.x) + "," + std::to_string(r.y) + ")");
    for (int k = 0; k < 4; ++k) (*targets[k])(o, r.taxon) = r.v[k];
  }
  return s;
}

void write_raster(const PosteriorSummary& summary, SummaryField field, const std::string& path) {
  const Eigen::MatrixXd& values = field_of(summary, field);
  const GridSpec& g = summary.grid;
  auto out = open_output(path);
  out << "# field " << to_string(field) << '\n'
      << "# nx " << g.nx << " ny " << g.ny << " cell_size " << format_double(g.cell_size) << " origin "
      << format_double(g.origin_x) << ' ' << format_double(g.origin_y) << '\n'
      << "# first row is y = 0 (south edge), columns run west to east\n";
  for (std::size_t p = 0; p < summary.taxa.size(); ++p) {
    out << "# taxon " << summary.taxa[p] << '\n';
    for (int y = 0; y < g.ny; ++y) {
      for (int x = 0; x < g.nx; ++x)
        out << (x ? " " : "") << format_double(values(y * g.nx + x, static_cast<Eigen::Index>(p)));
      out << '\n';
    }
  }
  finish_output(out, path);
}

std::vector<Eigen::MatrixXd> read_raster(const std::string& path, std::vector<std::string>* taxa) {
  auto in = open_input(path);
  std::vector<Eigen::MatrixXd> out;
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (names.empty()) return;
    if (rows.empty()) throw ParseError(path, line_no, "taxon " + names.back() + " has no rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size()) throw ParseError(path, line_no, "ragged raster rows");
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    out.push_back(std::move(m));
    rows.clear();
  };
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      constexpr std::string_view tag = "# taxon ";
      if (t.substr(0, tag.size()) == tag) {
        flush();
        names.emplace_back(t.substr(tag.size()));
      }
      continue;
    }
    if (names.empty()) throw ParseError(path, line_no, "values before the first taxon block");
    std::vector<double> row;
    std::istringstream fields{std::string(t)};
    std::string token;
    while (fields >> token) {
      const auto v = detail::parse_number<double>(token);
      if (!v) throw ParseError(path, line_no, "invalid value '" + token + "'");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  flush();
  if (taxa) *taxa = names;
  return out;
}

}  // namespace gridcomp
