#pragma once

#include "gridcomp/model.hpp"
#include "gridcomp/sampler.hpp"
#include "gridcomp/scoring.hpp"

namespace gridcomp {

struct HoldoutResult {
  ScoreReport report;
  DataSplit split;
  RunResult fit_a;
  RunResult fit_b;
};

// Splits the data, fits both models on the training part as independent
// concurrent chains, and scores them against the held-out part.
HoldoutResult run_holdout_experiment(const GridSpec& grid, const Dataset& data, const HoldoutDesign& design,
                                     const SamplerConfig& config_a, const SamplerConfig& config_b,
                                     const ScoreOptions& options, const RunOptions& run_options = {});

}  // namespace gridcomp
