#include "gridcomp/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "gridcomp/error.hpp"
#include "text.hpp"

namespace gridcomp {

namespace {

struct Key {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& value, const std::string& expected) {
  throw ConfigError("invalid value '" + value + "' (expected " + expected + ")");
}

template <class T>
T to_number(const std::string& value) {
  const auto v = detail::parse_number<T>(value);
  if (!v) bad_value(value, std::is_integral_v<T> ? "an integer" : "a number");
  return *v;
}

bool to_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(value, "true or false");
}

std::string from_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

PrecisionKind to_kind(const std::string& value) {
  try {
    return parse_precision_kind(value);
  } catch (const std::exception&) {
    bad_value(value, "car, spde or iid");
  }
}

std::vector<std::string> to_list(const std::string& value) {
  std::vector<std::string> out;
  if (detail::trim(value).empty()) return out;
  for (auto& f : detail::split_fields(value)) out.push_back(std::move(f));
  return out;
}

std::string from_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ",") + i;
  return out;
}

std::string from_bound(int v) { return v == INT_MAX ? "" : std::to_string(v); }

int to_bound(const std::string& value) {
  return detail::trim(value).empty() ? INT_MAX : to_number<int>(value);
}

#define NUM(field, T) \
  [](RunConfig& c, const std::string& v) { c.field = to_number<T>(v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }
#define REAL(field) \
  [](RunConfig& c, const std::string& v) { c.field = to_number<double>(v); }, \
      [](const RunConfig& c) { return from_double(c.field); }
#define TEXT(field) \
  [](RunConfig& c, const std::string& v) { c.field = v; }, [](const RunConfig& c) { return c.field; }
#define FLAG(field) \
  [](RunConfig& c, const std::string& v) { c.field = to_bool(v); }, \
      [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }
#define KIND(field) \
  [](RunConfig& c, const std::string& v) { c.field = to_kind(v); }, \
      [](const RunConfig& c) { return std::string(to_string(c.field)); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"nx", "grid cells in x", NUM(grid.nx, int)},
      {"ny", "grid cells in y (modeled rows)", NUM(grid.ny, int)},
      {"buffer", "prediction-only ring width in cells", NUM(grid.buffer, int)},
      {"cell_size", "cell edge length (metadata)", REAL(grid.cell_size)},
      {"origin_x", "x of the southwest corner (metadata)", REAL(grid.origin_x)},
      {"origin_y", "y of the southwest corner (metadata)", REAL(grid.origin_y)},
      {"omit_rows_south", "input rows south of the modeled grid", NUM(rows.omit_south, int)},
      {"omit_rows_north", "input rows north of the modeled grid", NUM(rows.omit_north, int)},
      {"model", "spatial prior: car, spde or iid", KIND(sampler.model)},
      {"n_iter", "MCMC iterations", NUM(sampler.n_iter, long)},
      {"burn_in", "iterations discarded before retention", NUM(sampler.burn_in, long)},
      {"n_retained", "retained samples K", NUM(sampler.n_retained, int)},
      {"seed", "random seed", NUM(sampler.seed, std::uint64_t)},
      {"adapt_interval", "iterations per proposal adaptation batch", NUM(sampler.adapt_interval, int)},
      {"target_accept_1d", "target acceptance of 1-D blocks", REAL(sampler.target_accept_1d)},
      {"target_accept_2d", "target acceptance of 2-D blocks", REAL(sampler.target_accept_2d)},
      {"sigma_upper", "upper bound of the uniform prior on sigma", REAL(sampler.hyperpriors.sigma_upper)},
      {"mu_bound", "bound of the uniform prior on mu", REAL(sampler.hyperpriors.mu_bound)},
      {"rho_lower", "lower bound of the uniform prior on rho", REAL(sampler.hyperpriors.rho_lower)},
      {"rho_upper", "upper bound of the uniform prior on rho", REAL(sampler.hyperpriors.rho_upper)},
      {"init_sigma", "initial sigma", REAL(sampler.init_sigma)},
      {"init_rho", "initial rho", REAL(sampler.init_rho)},
      {"init_mu", "initial mu", REAL(sampler.init_mu)},
      {"extra_alpha_draw", "extra Gibbs alpha draw per taxon each sweep", FLAG(sampler.extra_alpha_draw)},
      {"t_mc", "Monte Carlo draws per cell for theta", NUM(sampler.t_mc, int)},
      {"save_alpha", "also keep retained alpha samples", FLAG(sampler.save_alpha)},
      {"taxa", "optional fixed taxon order",
       [](RunConfig& c, const std::string& v) { c.taxa = to_list(v); },
       [](const RunConfig& c) { return from_list(c.taxa); }},
      {"counts_path", "gridded counts CSV", TEXT(counts_path)},
      {"township_trees_path", "township trees CSV", TEXT(township_trees_path)},
      {"township_overlaps_path", "township overlaps CSV", TEXT(township_overlaps_path)},
      {"output_dir", "run directory", TEXT(output_dir)},
      {"threads", "worker threads, 0 = all available", NUM(threads, int)},
      {"checkpoint_every", "iterations between checkpoints, 0 = off", NUM(checkpoint_every, long)},
      {"log_every", "iterations between progress records", NUM(log_every, long)},
      {"holdout_kind", "full_cell or per_tree",
       [](RunConfig& c, const std::string& v) {
         try {
           c.holdout.kind = parse_holdout_kind(v);
         } catch (const std::exception&) {
           bad_value(v, "full_cell or per_tree");
         }
       },
       [](const RunConfig& c) { return std::string(to_string(c.holdout.kind)); }},
      {"holdout_fraction", "share of eligible cells or trees held out", REAL(holdout.fraction)},
      {"holdout_x_min", "subregion x start (inclusive)", NUM(holdout.region.x_min, int)},
      {"holdout_x_max", "subregion x end (exclusive), empty = grid edge",
       [](RunConfig& c, const std::string& v) { c.holdout.region.x_max = to_bound(v); },
       [](const RunConfig& c) { return from_bound(c.holdout.region.x_max); }},
      {"holdout_y_min", "subregion y start (inclusive)", NUM(holdout.region.y_min, int)},
      {"holdout_y_max", "subregion y end (exclusive), empty = grid edge",
       [](RunConfig& c, const std::string& v) { c.holdout.region.y_max = to_bound(v); },
       [](const RunConfig& c) { return from_bound(c.holdout.region.y_max); }},
      {"holdout_seed", "seed of the held-out selection and interval draws", NUM(holdout.seed, std::uint64_t)},
      {"min_trees", "minimum trees for an interval-coverage cell", NUM(min_trees, int)},
      {"interval_method", "binomial or theta",
       [](RunConfig& c, const std::string& v) {
         try {
           c.interval_method = parse_interval_method(v);
         } catch (const std::exception&) {
           bad_value(v, "binomial or theta");
         }
       },
       [](const RunConfig& c) { return std::string(to_string(c.interval_method)); }},
      {"compare_a", "first model of a holdout comparison", KIND(compare_a)},
      {"compare_b", "second model of a holdout comparison", KIND(compare_b)},
      {"sim_model", "prior used to simulate fields", KIND(simulation.model)},
      {"sim_taxa", "simulated taxon names",
       [](RunConfig& c, const std::string& v) { c.simulation.taxa = to_list(v); },
       [](const RunConfig& c) { return from_list(c.simulation.taxa); }},
      {"sim_sigma", "true sigma", REAL(simulation.sigma)},
      {"sim_rho", "true rho (spde)", REAL(simulation.rho)},
      {"sim_mu", "true mu (spde)", REAL(simulation.mu)},
      {"sim_trees_per_cell", "trees per populated cell", NUM(simulation.trees_per_cell, int)},
      {"sim_data_fraction", "share of cells with gridded counts", REAL(simulation.data_fraction)},
      {"sim_township_rows", "southern rows reported by township", NUM(simulation.township_rows, int)},
      {"sim_township_block", "township side in cells", NUM(simulation.township_block, int)},
      {"sim_seed", "simulation seed", NUM(simulation.seed, std::uint64_t)},
  };
  return table;
}

#undef NUM
#undef REAL
#undef TEXT
#undef FLAG
#undef KIND

}  // namespace

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (key == k.name) {
      try {
        k.set(config, value);
      } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  apply_setting(config, std::string(detail::trim(assignment.substr(0, eq))),
                std::string(detail::trim(assignment.substr(eq + 1))));
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(config, std::string(detail::trim(body.substr(0, eq))), std::string(detail::trim(body.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path);
}

void validate_config(const RunConfig& c, bool check_files) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.grid.nx < 1 || c.grid.ny < 1) fail("nx and ny must be >= 1");
  if (c.grid.buffer < 0) fail("buffer must be >= 0");
  if (!(c.grid.cell_size > 0.0)) fail("cell_size must be positive");
  if (c.rows.omit_south < 0 || c.rows.omit_north < 0) fail("omitted row counts must be >= 0");
  try {
    c.sampler.validate();
  } catch (const InvalidArgument& e) {
    fail(e.what());
  }
  if (c.threads < 0) fail("threads must be >= 0");
  if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (c.log_every < 0) fail("log_every must be >= 0");
  if (!(c.holdout.fraction > 0.0 && c.holdout.fraction <= 1.0)) fail("holdout_fraction must lie in (0, 1]");
  const auto& r = c.holdout.region;
  if (r.x_min < 0 || r.y_min < 0 || r.x_max <= r.x_min || r.y_max <= r.y_min) fail("holdout subregion is empty");
  if (c.min_trees < 1) fail("min_trees must be >= 1");
  try {
    c.simulation.validate();
  } catch (const InvalidArgument& e) {
    fail(e.what());
  }
  if (c.township_trees_path.empty() != c.township_overlaps_path.empty())
    fail("township_trees_path and township_overlaps_path must be given together");
  if (check_files) {
    for (const auto* p : {&c.counts_path, &c.township_trees_path, &c.township_overlaps_path})
      if (!p->empty() && !std::filesystem::is_regular_file(*p)) fail("input file not found: " + *p);
    if (c.counts_path.empty() && c.township_trees_path.empty() && c.taxa.empty())
      fail("no input data and no taxa: set counts_path, township paths or taxa");
  }
}

Dataset load_dataset(const RunConfig& config, long* masked) {
  Dataset data;
  data.taxa = TaxonRegistry(config.taxa);
  const bool fixed = !config.taxa.empty();
  long dropped = 0;
  if (!config.counts_path.empty()) {
    auto counts = read_cell_counts(config.counts_path, config.grid, data.taxa, config.rows);
    data.cells = std::move(counts.cells);
    dropped += counts.masked_records;
  }
  if (!config.township_trees_path.empty()) {
    auto towns = read_townships(config.township_trees_path, config.township_overlaps_path, config.grid, data.taxa, fixed,
                                config.rows);
    data.townships = std::move(towns.townships);
    dropped += towns.masked_overlaps;
  }
  // Township files may introduce taxa the counts file lacks.
  for (auto& c : data.cells) c.counts.resize(static_cast<std::size_t>(data.taxa.size()), 0);
  if (masked) *masked += dropped;
  data.validate(config.grid);
  return data;
}

std::string render_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& k : keys()) out << k.name << " = " << k.get(config) << '\n';
  return out.str();
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.help);
  return out;
}

}  // namespace gridcomp
