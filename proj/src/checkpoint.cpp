#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "gridcomp/error.hpp"
#include "gridcomp/sampler.hpp"

namespace gridcomp {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'O', 'M', 'P', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

// Everything that must match for a resumed chain to continue the same run.
std::string fingerprint(const Problem& problem, const SamplerConfig& config) {
  std::ostringstream out;
  out.precision(17);
  const GridSpec& g = problem.grid();
  out << "model=" << to_string(config.model) << ";n_iter=" << config.n_iter << ";burn_in=" << config.burn_in
      << ";n_retained=" << config.n_retained << ";seed=" << config.seed << ";adapt=" << config.adapt_interval
      << ";targets=" << config.target_accept_1d << ',' << config.target_accept_2d
      << ";priors=" << config.hyperpriors.sigma_upper << ',' << config.hyperpriors.mu_bound << ','
      << config.hyperpriors.rho_lower << ',' << config.hyperpriors.rho_upper << ";t_mc=" << config.t_mc
      << ";save_alpha=" << config.save_alpha << ";extra=" << config.extra_alpha_draw << ";grid=" << g.nx << 'x'
      << g.ny << '+' << g.buffer << ";taxa=";
  for (const auto& t : problem.taxa()) out << t << ',';
  out << ";trees=" << problem.num_trees() << ";records=" << problem.num_grid_records()
      << ";townships=" << problem.num_townships();
  return out.str();
}

void put_matrix(detail::ByteWriter& w, const Eigen::MatrixXd& m) {
  w.put<std::int64_t>(m.rows());
  w.put<std::int64_t>(m.cols());
  w.put_raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Eigen::MatrixXd get_matrix(detail::ByteReader& r) {
  const auto rows = r.get<std::int64_t>();
  const auto cols = r.get<std::int64_t>();
  if (rows < 0 || cols < 0 || (cols > 0 && static_cast<std::size_t>(rows) >
                                                 r.remaining() / sizeof(double) / static_cast<std::size_t>(cols)))
    throw IoError("checkpoint: bad matrix dimensions");
  Eigen::MatrixXd m(rows, cols);
  r.get_raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return m;
}

void put_hyper(detail::ByteWriter& w, const TaxonHyper& h) {
  w.put(h.sigma);
  w.put(h.rho);
  w.put(h.mu);
}

TaxonHyper get_hyper(detail::ByteReader& r) {
  TaxonHyper h;
  h.sigma = r.get<double>();
  h.rho = r.get<double>();
  h.mu = r.get<double>();
  return h;
}

void put_proposal(detail::ByteWriter& w, const AdaptiveProposal& a) {
  w.put<std::int32_t>(a.dim);
  w.put(a.target);
  w.put(a.log_scale);
  put_matrix(w, a.shape);
  for (long v : {a.batches, a.batch_accepted, a.batch_proposed, a.accepted, a.proposed, a.post_accepted,
                 a.post_proposed, a.n_seen})
    w.put<std::int64_t>(v);
  put_matrix(w, a.running_mean);
  put_matrix(w, a.running_m2);
}

AdaptiveProposal get_proposal(detail::ByteReader& r) {
  AdaptiveProposal a;
  a.dim = r.get<std::int32_t>();
  a.target = r.get<double>();
  a.log_scale = r.get<double>();
  a.shape = get_matrix(r);
  for (long* v : {&a.batches, &a.batch_accepted, &a.batch_proposed, &a.accepted, &a.proposed, &a.post_accepted,
                  &a.post_proposed, &a.n_seen})
    *v = r.get<std::int64_t>();
  a.running_mean = get_matrix(r);
  a.running_m2 = get_matrix(r);
  return a;
}

}  // namespace

void write_checkpoint(const std::string& path, const Problem& problem, const SamplerConfig& config,
                      const RunProgress& progress) {
  const ChainState& s = progress.state;
  detail::ByteWriter w;
  w.put_raw(kMagic, sizeof kMagic);
  w.put(kVersion);
  w.put_string(fingerprint(problem, config));
  w.put<std::int64_t>(s.iteration);
  put_matrix(w, s.alpha);
  w.put<std::int64_t>(s.w.rows());
  w.put<std::int64_t>(s.w.cols());
  w.put_raw(s.w.data(), static_cast<std::size_t>(s.w.size()) * sizeof(double));
  w.put_vector(s.cell_of_tree);
  w.put<std::uint64_t>(s.hyper.size());
  for (const auto& h : s.hyper) put_hyper(w, h);
  w.put<std::uint64_t>(s.proposals.size());
  for (const auto& blocks : s.proposals) {
    w.put<std::uint64_t>(blocks.size());
    for (const auto& b : blocks) put_proposal(w, b);
  }

  w.put<std::int32_t>(progress.samples.num_samples);
  w.put_vector(progress.samples.values);
  w.put<std::uint64_t>(progress.hyper_trace.size());
  for (const auto& row : progress.hyper_trace) {
    w.put<std::uint64_t>(row.size());
    for (const auto& h : row) put_hyper(w, h);
  }
  w.put<std::uint64_t>(progress.alpha_samples.size());
  for (const auto& a : progress.alpha_samples) put_matrix(w, a);
  w.put<std::uint64_t>(progress.membership_counts.size());
  for (const auto& counts : progress.membership_counts) w.put_vector(counts);

  const std::uint32_t crc = detail::crc32(w.bytes().data(), w.bytes().size());
  w.put(crc);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + tmp);
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("failed writing checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into place: " + path);
}

RunProgress read_checkpoint(const std::string& path, const Problem& problem, const SamplerConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string context = "checkpoint " + path;
  if (bytes.size() < sizeof kMagic + sizeof(std::uint32_t) * 2) throw IoError(context + ": file too short");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - sizeof stored_crc, sizeof stored_crc);
  if (detail::crc32(bytes.data(), bytes.size() - sizeof stored_crc) != stored_crc)
    throw IoError(context + ": checksum mismatch");

  detail::ByteReader r(bytes.data(), bytes.size() - sizeof stored_crc, context);
  char magic[sizeof kMagic];
  r.get_raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(context + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw IoError(context + ": unsupported version " + std::to_string(version) + " (expected " +
                  std::to_string(kVersion) + ")");
  if (r.get_string() != fingerprint(problem, config))
    throw IoError(context + ": written for a different configuration or dataset");

  RunProgress p;
  ChainState& s = p.state;
  s.iteration = r.get<std::int64_t>();
  s.alpha = get_matrix(r);
  const auto w_rows = r.get<std::int64_t>();
  const auto w_cols = r.get<std::int64_t>();
  if (w_rows != problem.num_trees() || w_cols != problem.num_taxa()) throw IoError(context + ": bad latent dimensions");
  s.w.resize(w_rows, w_cols);
  r.get_raw(s.w.data(), static_cast<std::size_t>(s.w.size()) * sizeof(double));
  s.cell_of_tree = r.get_vector<int>();
  s.hyper.resize(r.get<std::uint64_t>());
  for (auto& h : s.hyper) h = get_hyper(r);
  s.proposals.resize(r.get<std::uint64_t>());
  for (auto& blocks : s.proposals) {
    blocks.resize(r.get<std::uint64_t>());
    for (auto& b : blocks) b = get_proposal(r);
  }
  if (s.alpha.rows() != problem.num_cells() || s.alpha.cols() != problem.num_taxa() ||
      static_cast<int>(s.cell_of_tree.size()) != problem.num_trees() ||
      static_cast<int>(s.hyper.size()) != problem.num_taxa() ||
      static_cast<int>(s.proposals.size()) != problem.num_taxa())
    throw IoError(context + ": state dimensions do not match the problem");

  const GridSpec& g = problem.grid();
  p.samples.grid = build_grid(g.nx, g.ny, 0);
  p.samples.grid.cell_size = g.cell_size;
  p.samples.grid.origin_x = g.origin_x;
  p.samples.grid.origin_y = g.origin_y;
  p.samples.taxa = problem.taxa();
  p.samples.num_samples = r.get<std::int32_t>();
  p.samples.values = r.get_vector<double>();
  if (p.samples.values.size() !=
      static_cast<std::size_t>(p.samples.num_samples) * p.samples.num_cells() * p.samples.num_taxa())
    throw IoError(context + ": sample block has the wrong size");
  p.hyper_trace.resize(r.get<std::uint64_t>());
  for (auto& row : p.hyper_trace) {
    row.resize(r.get<std::uint64_t>());
    for (auto& h : row) h = get_hyper(r);
  }
  p.alpha_samples.resize(r.get<std::uint64_t>());
  for (auto& a : p.alpha_samples) a = get_matrix(r);
  p.membership_counts.resize(r.get<std::uint64_t>());
  for (auto& counts : p.membership_counts) counts = r.get_vector<long>();
  if (r.remaining() != 0) throw IoError(context + ": trailing bytes");
  return p;
}

}  // namespace gridcomp
