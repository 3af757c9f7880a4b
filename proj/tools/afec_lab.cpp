// afec_lab: run, grid, datagen and report front end.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "afec/continual.hpp"
#include "afec/errors.hpp"
#include "afec/experiment.hpp"
#include "afec/report.hpp"

namespace fs = std::filesystem;
using namespace afec;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config;
  std::string out;
  std::string results;
  int jobs = 1;
  std::optional<std::uint64_t> seed_override;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = load_experiment(o.config);
  if (o.seed_override) cfg.seeds = {*o.seed_override};
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

std::string run_stem(const RunResult& r) {
  return std::string(to_string(r.config.method)) + "_seed" + std::to_string(r.config.seed);
}

int cmd_run(const Options& o) {
  const ExperimentConfig cfg = load(o);
  if (cfg.lambda.size() != 1) throw ConfigError("lambda: run takes exactly one value (use grid)");
  if (cfg.lambda_e.size() != 1)
    throw ConfigError("lambda_e: run takes exactly one value (use grid)");
  std::vector<RunResult> results;
  for (Method m : cfg.methods)
    for (std::uint64_t seed : cfg.seeds) {
      const auto tasks = build_tasks(cfg.benchmark, seed);
      results.push_back(
          run_sequence(sequence_config(cfg, m, cfg.lambda[0], cfg.lambda_e[0], seed), tasks));
    }
  const fs::path out = cfg.output_dir;
  for (const auto& r : results) write_run_result(r, out / "runs", run_stem(r));
  emit_report(results, out);
  std::cout << "wrote " << results.size() << " run(s) to " << out.string() << "\n";
  return kOk;
}

int cmd_grid(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const GridResult g = run_grid(cfg, o.jobs);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  {
    std::ofstream csv(out / "grid.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write " + (out / "grid.csv").string());
    csv << grid_csv(g);
  }
  std::vector<RunResult> all;
  for (const auto& c : g.cells)
    for (const auto& r : c.runs) all.push_back(r);
  emit_report(all, out);
  const GridCell& best = g.cells[g.best];
  std::printf("best: method=%s lambda=%s lambda_e=%s mean_ACC=%.6f\n",
              std::string(to_string(best.method)).c_str(), format_number(best.lambda).c_str(),
              format_number(best.lambda_e).c_str(), best.mean_acc());
  return kOk;
}

int cmd_datagen(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const fs::path out = cfg.output_dir;
  std::printf("%-6s %-6s %-6s %10s\n", "task", "class", "slot", "angle_deg");
  for (std::uint64_t seed : cfg.seeds) {
    const auto tasks = build_tasks(cfg.benchmark, seed);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const TaskDataset& task = tasks[t];
      export_task_csv(task, out, "seed" + std::to_string(seed) + "_task" + std::to_string(t + 1));
      const std::size_t n = task.class_angles.size();
      for (std::size_t k = 0; k < n; ++k) {
        const double deg = task.class_angles[k] * 180.0 / std::acos(-1.0);
        const auto slot = static_cast<long>(std::lround(deg / (360.0 / static_cast<double>(n)))) %
                          static_cast<long>(n);
        std::printf("%-6zu %-6zu %-6ld %10.2f\n", t + 1, k, slot, deg);
      }
    }
  }
  return kOk;
}

int cmd_report(const Options& o) {
  if (o.results.empty()) throw ConfigError("--results: required");
  const fs::path dir = o.results;
  if (!fs::is_directory(dir)) throw IoError("results directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunResult> results;
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
    results.push_back(run_result_from_json(j));
  }
  if (results.empty()) throw InputError("no run results in " + dir.string());
  emit_report(results, o.out.empty() ? dir : fs::path(o.out));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AFEC continual-learning lab"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed_override = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "experiment config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
    sub->add_option("--seed-override", seed_override, "run a single seed instead of the list");
  };
  auto* run = app.add_subcommand("run", "run every method x seed of a config");
  add_common(run, true);
  auto* grid = app.add_subcommand("grid", "hyperparameter grid over lambda / lambda_e");
  add_common(grid, true);
  grid->add_option("--jobs", o.jobs, "concurrent runs")->check(CLI::PositiveNumber);
  auto* datagen = app.add_subcommand("datagen", "write generated tasks as CSV");
  add_common(datagen, true);
  auto* report = app.add_subcommand("report", "rebuild the report from run-result JSON files");
  report->add_option("--results", o.results, "directory of <run>.json files")->required();
  report->add_option("--out", o.out, "output directory (defaults to --results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  for (auto* sub : {run, grid, datagen})
    if (sub->parsed() && sub->count("--seed-override") > 0) o.seed_override = seed_override;

  try {
    if (run->parsed()) return cmd_run(o);
    if (grid->parsed()) return cmd_grid(o);
    if (datagen->parsed()) return cmd_datagen(o);
    return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}
