#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "afec/metrics.hpp"
#include "afec/nn.hpp"
#include "afec/regularizers.hpp"
#include "afec/tasks.hpp"

namespace afec {

struct SequenceConfig {
  Method method = Method::finetune;
  double lambda = 0.0;
  double lambda_e = 0.0;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  OptimizerSpec optimizer;
  std::uint64_t seed = 0;
  /// Evaluate each upcoming task before training it (the entries FWT needs).
  bool eval_every_task = true;

  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
  /// Expansion budget; defaults to `epochs`.
  std::optional<std::size_t> expansion_epochs;
  ExpansionInit expansion_init = ExpansionInit::copy_main;
  ImportanceConfig importance;

  void validate() const;
  std::size_t expansion_budget() const { return expansion_epochs.value_or(epochs); }

  bool operator==(const SequenceConfig&) const = default;
};

struct RunResult {
  AccMatrix acc_matrix;
  std::vector<double> per_task_new_accuracy;  // A_{i,i}
  double wall_time = 0.0;                     // seconds
  SequenceConfig config;
  std::uint64_t state_digest = 0;   // digest of the final RegState
  std::uint64_t params_digest = 0;  // digest of the final network parameters

  /// Digest of everything the run computed. Excludes wall time and the config
  /// echo, so runs with different method labels but identical arithmetic
  /// compare equal.
  std::uint64_t checksum() const;
};

/// Snapshot taken after a task finishes; enough to continue the run.
struct RunCheckpoint {
  Network net;
  RegState state;
  std::uint64_t seed = 0;
  int task_count = 0;
  AccMatrix progress;

  bool operator==(const RunCheckpoint&) const = default;
};

struct RunOptions {
  const RunCheckpoint* resume = nullptr;
  std::function<void(const RunCheckpoint&)> on_task_end;
};

NetworkSpec sequence_network_spec(const SequenceConfig& cfg, std::span<const TaskDataset> tasks);

/// Trains the task sequence with the configured method: optional synaptic
/// expansion, penalised training of the main network, anchor and Fisher update,
/// then evaluation of every task seen so far through its own head.
RunResult run_sequence(const SequenceConfig& cfg, std::span<const TaskDataset> tasks,
                       const RunOptions& opts = {});

/// Test-split accuracy through the task's own head: argmax match for
/// classification, nearest class angle for angular regression.
double evaluate(const Network& net, const TaskDataset& task);

/// Trains a fresh linear head for `probe_task` on top of the frozen body and
/// returns its test accuracy. `net` is not modified.
double transfer_probe(const Network& net, const TaskDataset& probe_task, std::size_t epochs,
                      double lr, std::size_t batch_size = 32);

/// Mean accuracy of freshly initialised, untrained networks, one entry per task.
std::vector<double> random_init_baseline(std::span<const TaskDataset> tasks,
                                         const NetworkSpec& arch,
                                         std::span<const std::uint64_t> seeds);

std::uint64_t digest(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t digest(const RegState& state);

// Run-state persistence.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
nlohmann::json reg_state_to_json(const RegState& s);
RegState reg_state_from_json(const nlohmann::json& j);
nlohmann::json acc_matrix_to_json(const AccMatrix& m);
AccMatrix acc_matrix_from_json(const nlohmann::json& j);
/// Compact binary form; its length depends only on the parameter count.
std::string serialize_reg_state(const RegState& s);

void save_state(const std::filesystem::path& path, const RunCheckpoint& cp);
RunCheckpoint load_state(const std::filesystem::path& path);

// RunResult export.
nlohmann::json sequence_config_to_json(const SequenceConfig& cfg);
SequenceConfig sequence_config_from_json(const nlohmann::json& j);
nlohmann::json run_result_to_json(const RunResult& r);
RunResult run_result_from_json(const nlohmann::json& j);
/// Writes <stem>.json and <stem>.csv (after_task, eval_task, accuracy).
void write_run_result(const RunResult& r, const std::filesystem::path& dir, const std::string& stem);

}  // namespace afec
