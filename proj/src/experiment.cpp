#include "gridcomp/experiment.hpp"

#include <algorithm>
#include <future>
#include <sstream>

#include "gridcomp/error.hpp"

namespace gridcomp {

HoldoutResult run_holdout_experiment(const GridSpec& grid, const Dataset& data, const HoldoutDesign& design,
                                     const SamplerConfig& config_a, const SamplerConfig& config_b,
                                     const ScoreOptions& options, const RunOptions& run_options) {
  HoldoutResult result;
  result.split = split_dataset(data, grid, design);
  if (result.split.heldout.cells.empty()) throw InvalidArgument("holdout design produced an empty held-out set");

  // Each chain logs into its own buffer; the buffers are flushed in order.
  std::ostringstream log_a;
  std::ostringstream log_b;
  auto fit = [&](const SamplerConfig& config, std::ostringstream& log) {
    const Problem problem(grid, result.split.training, config.model);
    RunOptions opts;
    opts.log = run_options.log ? &log : nullptr;
    opts.log_every = run_options.log_every;
    opts.threads = run_options.threads;
    return run_chain(problem, config, opts);
  };
  auto future_a = std::async(std::launch::async, fit, std::cref(config_a), std::ref(log_a));
  auto future_b = std::async(std::launch::async, fit, std::cref(config_b), std::ref(log_b));
  result.fit_a = future_a.get();
  result.fit_b = future_b.get();
  if (run_options.log) *run_options.log << log_a.str() << log_b.str() << std::flush;

  ScoreOptions scoring = options;
  scoring.seed = design.seed;
  const std::string name_a(to_string(config_a.model));
  std::string name_b(to_string(config_b.model));
  if (name_b == name_a) name_b += "_b";
  result.report = compare_models(result.split.heldout, name_a, result.fit_a.samples, name_b, result.fit_b.samples, scoring);
  std::ostringstream d;
  d << to_string(design.kind) << ", fraction " << design.fraction << ", seed " << design.seed;
  if (design.kind == HoldoutKind::full_cell) {
    const auto& r = design.region;
    d << ", subregion x in [" << r.x_min << ", " << std::min(r.x_max, grid.nx) << "), y in [" << r.y_min << ", "
      << std::min(r.y_max, grid.ny) << ")";
  }
  result.report.design = d.str();
  return result;
}

}  // namespace gridcomp
