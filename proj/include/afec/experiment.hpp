#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "afec/continual.hpp"

namespace afec {

enum class BenchmarkKind { conflicting_pair, angular_sequence, idx_split };

std::string_view to_string(BenchmarkKind k);

struct BenchmarkSpec {
  BenchmarkKind kind = BenchmarkKind::conflicting_pair;
  std::size_t num_classes = 10;
  std::size_t num_tasks = 2;  // angular_sequence only
  std::size_t samples_per_class = 50;
  std::size_t input_dim = 16;
  double cluster_spread = 0.3;
  double center_scale = 1.0;
  std::optional<std::uint64_t> data_seed;  // defaults to the run seed
  std::string images;                      // idx_split only
  std::string labels;
  std::size_t classes_per_task = 5;

  bool operator==(const BenchmarkSpec&) const = default;
};

/// Everything one experiment file describes.
struct ExperimentConfig {
  int version = 1;
  BenchmarkSpec benchmark;
  std::vector<Method> methods{Method::afec};
  std::vector<double> lambda{0.0};
  std::vector<double> lambda_e{0.0};
  std::vector<std::uint64_t> seeds{0};
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  OptimizerSpec optimizer;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
  std::optional<std::size_t> expansion_epochs;
  ExpansionInit expansion_init = ExpansionInit::copy_main;
  ImportanceConfig importance;
  bool eval_every_task = true;
  std::string output_dir = "results";

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Strict parse: unknown keys and wrong types raise ConfigError with the field path.
ExperimentConfig parse_experiment(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

std::vector<TaskDataset> build_tasks(const BenchmarkSpec& spec, std::uint64_t run_seed);

SequenceConfig sequence_config(const ExperimentConfig& cfg, Method method, double lambda,
                               double lambda_e, std::uint64_t seed);

struct GridCell {
  Method method = Method::afec;
  double lambda = 0.0;
  double lambda_e = 0.0;
  std::vector<RunResult> runs;  // one per seed, in seed order

  double mean_acc() const;
};

struct GridResult {
  std::vector<GridCell> cells;  // methods x lambda x lambda_e, in config order
  std::size_t best = 0;
};

/// Every cell x seed, executed on up to `jobs` threads. Results are gathered by
/// index, so the output does not depend on `jobs`.
GridResult run_grid(const ExperimentConfig& cfg, int jobs);

/// Best cell: highest mean ACC; ties go to the smaller lambda_e, then the
/// smaller lambda, then earlier method order.
std::size_t best_cell(const std::vector<GridCell>& cells);

std::string grid_csv(const GridResult& g);

}  // namespace afec
