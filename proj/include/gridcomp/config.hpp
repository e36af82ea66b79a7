#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gridcomp/grid.hpp"
#include "gridcomp/io.hpp"
#include "gridcomp/model.hpp"
#include "gridcomp/sampler.hpp"
#include "gridcomp/scoring.hpp"
#include "gridcomp/simulate.hpp"

namespace gridcomp {

// One file fully determines a run. Unset paths are empty.
struct RunConfig {
  GridSpec grid = build_grid(10, 10, 0);
  RowMask rows;
  SamplerConfig sampler;
  std::vector<std::string> taxa;  // optional fixed registry order
  std::string counts_path;
  std::string township_trees_path;
  std::string township_overlaps_path;
  std::string output_dir = "run";
  int threads = 0;
  long checkpoint_every = 0;
  long log_every = 1000;
  HoldoutDesign holdout;
  int min_trees = 50;
  IntervalMethod interval_method = IntervalMethod::binomial;
  PrecisionKind compare_a = PrecisionKind::car;
  PrecisionKind compare_b = PrecisionKind::spde;
  SimulationSettings simulation;
};

// Parses `key = value` lines (`#` starts a comment) into a config. Keys are
// applied in file order, so later lines win.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

// Applies one `key=value` assignment; throws ConfigError on an unknown key or
// a malformed value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
void apply_override(RunConfig& config, const std::string& assignment);

// Numeric and cross-field checks; with check_files, also that every
// referenced input file exists.
void validate_config(const RunConfig& config, bool check_files);

// Canonical `key = value` rendering that parses back to the same config.
std::string render_config(const RunConfig& config);

// Reads the configured input files into a dataset. Counts of records dropped
// by the row mask are added to *masked when given.
Dataset load_dataset(const RunConfig& config, long* masked = nullptr);

// The known keys with one-line descriptions, in rendering order.
std::vector<std::pair<std::string, std::string>> config_keys();

}  // namespace gridcomp
