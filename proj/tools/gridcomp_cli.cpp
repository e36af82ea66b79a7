// gridcomp: simulate, fit, summarize and score gridded composition models.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridcomp/config.hpp"
#include "gridcomp/error.hpp"
#include "gridcomp/estimator.hpp"
#include "gridcomp/experiment.hpp"
#include "gridcomp/io.hpp"
#include "gridcomp/sampler.hpp"
#include "gridcomp/scoring.hpp"
#include "gridcomp/simulate.hpp"
#include "gridcomp/version.hpp"

namespace fs = std::filesystem;
using namespace gridcomp;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int threads = -1;
  int verbosity = 0;
};

// Duplicates everything written to it into two buffers.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return traits_type::not_eof(c);
    const auto ch = traits_type::to_char_type(c);
    if (a_->sputc(ch) == traits_type::eof() || (b_ && b_->sputc(ch) == traits_type::eof())) return traits_type::eof();
    return c;
  }
  int sync() override { return (a_->pubsync() == 0 && (!b_ || b_->pubsync() == 0)) ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

RunConfig resolve_config(const Common& common) {
  RunConfig config = common.config_path.empty() ? RunConfig{} : load_config(common.config_path);
  for (const auto& o : common.overrides) apply_override(config, o);
  if (!common.out_dir.empty()) config.output_dir = common.out_dir;
  if (common.threads >= 0) config.threads = common.threads;
  return config;
}

fs::path prepare_output(const std::string& dir) {
  fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

void persist_config(const fs::path& dir, const RunConfig& config) {
  std::ostringstream text;
  text << "# resolved configuration, gridcomp " << kVersion << '\n' << render_config(config);
  write_text(dir / "resolved_config.txt", text.str());
}

void apply_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

void note(const Common& c, const std::string& msg) {
  if (c.verbosity >= 0) std::cerr << msg << '\n';
}

int cmd_validate(const Common& common) {
  const RunConfig config = resolve_config(common);
  validate_config(config, true);
  std::cout << render_config(config);
  return kOk;
}

int cmd_simulate(const Common& common) {
  RunConfig config = resolve_config(common);
  validate_config(config, false);
  const fs::path out = prepare_output(config.output_dir);
  GridSpec grid = config.grid;
  const SimulatedData sim = simulate_dataset(grid, config.simulation);

  config.counts_path = (out / "counts.csv").string();
  write_cell_counts(config.counts_path, grid, sim.data.taxa, sim.data.cells);
  if (!sim.data.townships.empty()) {
    config.township_trees_path = (out / "township_trees.csv").string();
    config.township_overlaps_path = (out / "township_overlaps.csv").string();
    write_townships(config.township_trees_path, config.township_overlaps_path, grid, sim.data.taxa,
                    sim.data.townships);
  } else {
    config.township_trees_path.clear();
    config.township_overlaps_path.clear();
  }
  config.taxa = sim.data.taxa.names();
  config.rows = {};
  write_truth_csv((out / "truth.csv").string(), grid, sim.data.taxa.names(), sim.truth);
  persist_config(out, config);
  note(common, "simulated " + std::to_string(sim.data.gridded_trees()) + " gridded and " +
                   std::to_string(sim.data.township_trees()) + " township trees into " + out.string());
  return kOk;
}

nlohmann::json diagnostics_json(const RunResult& result, const RunConfig& config, const std::string& archive_checksum) {
  const auto& d = result.diagnostics;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : d.blocks)
    blocks.push_back({{"taxon", result.samples.taxa[static_cast<std::size_t>(b.taxon)]},
                      {"block", b.block},
                      {"acceptance_after_burn_in", b.acceptance_rate},
                      {"acceptance_overall", b.overall_acceptance},
                      {"final_proposal_scale", b.final_proposal_scale}});
  nlohmann::json ess = nullptr;
  if (d.theta_ess.size() > 0) {
    std::vector<double> v(d.theta_ess.data(), d.theta_ess.data() + d.theta_ess.size());
    std::sort(v.begin(), v.end());
    ess = {{"min", v.front()}, {"median", sorted_quantile(v, 0.5)}, {"max", v.back()}};
  }
  return {{"tool_version", kVersion},
          {"model", std::string(to_string(config.sampler.model))},
          {"seed", config.sampler.seed},
          {"threads", config.threads > 0 ? config.threads : omp_get_max_threads()},
          {"iterations", d.iterations},
          {"seconds", d.seconds},
          {"retained", result.samples.num_samples},
          {"blocks", blocks},
          {"theta_ess", ess},
          {"membership_frequency", d.membership_frequency},
          {"archive_crc32", archive_checksum}};
}

void write_hyper_trace(const fs::path& path, const RunResult& result, PrecisionKind kind) {
  std::ostringstream out;
  out.precision(17);
  out << "sample,taxon,sigma" << (kind == PrecisionKind::spde ? ",rho,mu" : "") << '\n';
  for (std::size_t k = 0; k < result.hyper_trace.size(); ++k)
    for (std::size_t p = 0; p < result.hyper_trace[k].size(); ++p) {
      const auto& h = result.hyper_trace[k][p];
      out << k << ',' << result.samples.taxa[p] << ',' << h.sigma;
      if (kind == PrecisionKind::spde) out << ',' << h.rho << ',' << h.mu;
      out << '\n';
    }
  write_text(path, out.str());
}

SampleArchive make_archive(const RunResult& result, const RunConfig& config) {
  SampleArchive archive;
  archive.header = make_archive_header(result.samples);
  archive.header.seed = config.sampler.seed;
  archive.header.model = std::string(to_string(config.sampler.model));
  archive.header.t_mc = config.sampler.t_mc;
  archive.header.n_iter = config.sampler.n_iter;
  archive.header.burn_in = config.sampler.burn_in;
  archive.samples = result.samples;
  return archive;
}

void write_fit_outputs(const fs::path& out, const RunResult& result, const RunConfig& config, const std::string& stem) {
  const std::string archive_path = (out / (stem + ".gcarc")).string();
  write_samples(make_archive(result, config), archive_path);
  const std::string checksum = file_checksum(archive_path);
  write_text(out / (stem + "_diagnostics.json"), diagnostics_json(result, config, checksum).dump(2) + "\n");
  write_hyper_trace(out / (stem + "_hyper.csv"), result, config.sampler.model);
}

int cmd_fit(const Common& common, const std::string& resume, long stop_after) {
  RunConfig config = resolve_config(common);
  validate_config(config, true);
  apply_threads(config.threads);
  const fs::path out = prepare_output(config.output_dir);
  persist_config(out, config);
  long masked = 0;
  const Dataset data = load_dataset(config, &masked);
  if (masked > 0) note(common, std::to_string(masked) + " input records fell in masked rows and were skipped");
  const Problem problem(config.grid, data, config.sampler.model);

  std::ofstream log_file(out / "progress.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log_file) throw IoError("cannot open " + (out / "progress.jsonl").string());
  TeeBuf tee(log_file.rdbuf(), common.verbosity > 0 ? std::cerr.rdbuf() : nullptr);
  std::ostream log(&tee);

  RunOptions options;
  options.log = &log;
  options.log_every = config.log_every;
  options.threads = config.threads;
  options.checkpoint_every = config.checkpoint_every;
  if (config.checkpoint_every > 0 || stop_after > 0) options.checkpoint_path = (out / "checkpoint.bin").string();
  options.resume_path = resume;
  options.stop_after = stop_after;
  const RunResult result = run_chain(problem, config.sampler, options);
  if (!result.complete) {
    note(common, "stopped after iteration " + std::to_string(result.diagnostics.iterations) + "; resume with --resume " +
                     options.checkpoint_path);
    return kOk;
  }
  write_fit_outputs(out, result, config, "samples");
  note(common, "wrote " + std::to_string(result.samples.num_samples) + " samples to " + (out / "samples.gcarc").string());
  return kOk;
}

int cmd_summarize(const Common& common, const std::string& archive_path) {
  const SampleArchive archive = read_samples(archive_path);
  const fs::path out =
      prepare_output(common.out_dir.empty() ? (fs::path(archive_path).parent_path() / "summary").string() : common.out_dir);
  apply_threads(common.threads);
  const PosteriorSummary summary = summarize(archive.samples);
  write_summary_csv(summary, (out / "summary.csv").string());
  for (SummaryField f : {SummaryField::mean, SummaryField::sd, SummaryField::q025, SummaryField::q975})
    write_raster(summary, f, (out / (std::string("raster_") + to_string(f) + ".txt")).string());
  note(common, "wrote summary and rasters to " + out.string());
  return kOk;
}

ScoreOptions score_options(const RunConfig& config) {
  ScoreOptions o;
  o.min_trees = config.min_trees;
  o.interval_method = config.interval_method;
  o.seed = config.holdout.seed;
  return o;
}

int cmd_score(const Common& common, const std::vector<std::string>& archives, const std::string& heldout_path) {
  const RunConfig config = resolve_config(common);
  apply_threads(config.threads);
  std::vector<SampleArchive> loaded;
  for (const auto& a : archives) loaded.push_back(read_samples(a));
  const GridSpec& grid = loaded.front().samples.grid;
  for (const auto& a : loaded)
    if (a.header.nx != grid.nx || a.header.ny != grid.ny || a.header.taxa != loaded.front().header.taxa)
      throw InvalidArgument("archives to compare differ in grid or taxa");
  TaxonRegistry taxa(loaded.front().header.taxa);
  const auto counts = read_cell_counts(heldout_path, grid, taxa);
  const HeldoutSet heldout = make_heldout(grid, counts.cells, taxa.size());

  ScoreReport report;
  const ScoreOptions options = score_options(config);
  if (loaded.size() == 1) {
    report.models.push_back(score_model(loaded[0].header.model, heldout, loaded[0].samples, options));
    report.seed = options.seed;
    report.heldout_cells = static_cast<int>(heldout.cells.size());
    report.heldout_trees = heldout.total_trees();
  } else {
    std::string name_b = loaded[1].header.model;
    if (name_b == loaded[0].header.model) name_b += "_b";
    report = compare_models(heldout, loaded[0].header.model, loaded[0].samples, name_b, loaded[1].samples, options);
  }
  report.design = "external held-out file " + heldout_path;
  const fs::path out = prepare_output(common.out_dir.empty() ? std::string("score") : common.out_dir);
  std::ostringstream text;
  write_report_text(text, report);
  write_text(out / "report.txt", text.str());
  write_report_csv(report, (out / "report.csv").string());
  std::cout << text.str();
  return kOk;
}

int cmd_holdout(const Common& common) {
  const RunConfig config = resolve_config(common);
  validate_config(config, true);
  apply_threads(config.threads);
  const fs::path out = prepare_output(config.output_dir);
  persist_config(out, config);
  const Dataset data = load_dataset(config);

  SamplerConfig a = config.sampler;
  a.model = config.compare_a;
  SamplerConfig b = config.sampler;
  b.model = config.compare_b;
  std::ofstream log_file(out / "progress.jsonl", std::ios::trunc);
  TeeBuf tee(log_file.rdbuf(), common.verbosity > 0 ? std::cerr.rdbuf() : nullptr);
  std::ostream log(&tee);
  RunOptions options;
  options.log = &log;
  options.log_every = config.log_every;
  options.threads = config.threads;
  const HoldoutResult result =
      run_holdout_experiment(config.grid, data, config.holdout, a, b, score_options(config), options);

  RunConfig config_a = config;
  config_a.sampler = a;
  RunConfig config_b = config;
  config_b.sampler = b;
  write_fit_outputs(out, result.fit_a, config_a, result.report.models[0].model);
  write_fit_outputs(out, result.fit_b, config_b, result.report.models[1].model);
  write_cell_counts((out / "heldout_counts.csv").string(), config.grid, data.taxa, [&] {
    std::vector<CellCount> cells;
    const GridSpec& g = config.grid;
    for (const auto& c : result.split.heldout.cells) cells.push_back({g.interior_index(c.cell % g.nx, c.cell / g.nx), c.counts});
    return cells;
  }());
  std::ostringstream text;
  write_report_text(text, result.report);
  write_text(out / "report.txt", text.str());
  write_report_csv(result.report, (out / "report.csv").string());
  std::cout << text.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian spatial composition of gridded tree survey data"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("-c,--config", common.config_path, "run configuration file")->check(CLI::ExistingFile);
      sub->add_option("--set", common.overrides, "key=value override, applied left to right")->take_all();
    }
    sub->add_option("-o,--out", common.out_dir, "output directory (overrides output_dir)");
    sub->add_option("-t,--threads", common.threads, "worker threads, 0 = all available")->check(CLI::NonNegativeNumber);
    sub->add_flag("-v,--verbose", common.verbosity, "echo progress records to stderr");
    sub->add_flag_callback("-q,--quiet", [&] { common.verbosity = -1; }, "suppress notes on stderr");
  };

  auto* simulate = app.add_subcommand("simulate", "draw a synthetic dataset from the model");
  add_common(simulate, true);
  auto* fit = app.add_subcommand("fit", "run the sampler and write a sample archive");
  add_common(fit, true);
  std::string resume;
  long stop_after = 0;
  fit->add_option("--resume", resume, "continue from a checkpoint file")->check(CLI::ExistingFile);
  fit->add_option("--stop-after", stop_after, "checkpoint and stop after this iteration");
  auto* summarize_cmd = app.add_subcommand("summarize", "posterior summaries and rasters from an archive");
  add_common(summarize_cmd, false);
  std::string archive;
  summarize_cmd->add_option("-a,--archive", archive, "sample archive")->required()->check(CLI::ExistingFile);
  auto* score = app.add_subcommand("score", "score one or two archives against held-out counts");
  add_common(score, true);
  std::vector<std::string> archives;
  std::string heldout;
  score->add_option("-a,--archive", archives, "sample archive (give two to compare)")
      ->required()
      ->expected(1, 2)
      ->check(CLI::ExistingFile);
  score->add_option("--heldout", heldout, "held-out counts CSV")->required()->check(CLI::ExistingFile);
  auto* holdout = app.add_subcommand("holdout", "split, fit two models and score them");
  add_common(holdout, true);
  auto* validate = app.add_subcommand("validate-config", "check a configuration and print it resolved");
  add_common(validate, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*fit) return cmd_fit(common, resume, stop_after);
    if (*summarize_cmd) return cmd_summarize(common, archive);
    if (*score) return cmd_score(common, archives, heldout);
    if (*holdout) return cmd_holdout(common);
    if (*validate) return cmd_validate(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const InvalidArgument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
