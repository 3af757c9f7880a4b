#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>

#include "afec/nn.hpp"
#include "afec/posterior.hpp"
#include "afec/tasks.hpp"
#include "afec/training.hpp"

namespace afec {

enum class Method { finetune, ewc, afec, mas, si, rwalk, mas_afec, si_afec, rwalk_afec };
enum class ImportanceMethod { mas, si, rwalk };
enum class ExpansionInit { copy_main, fresh_random };

std::string_view to_string(Method m);
std::string_view to_string(ImportanceMethod m);
std::string_view to_string(ExpansionInit e);
Method parse_method(std::string_view s);
ImportanceMethod parse_importance_method(std::string_view s);
ExpansionInit parse_expansion_init(std::string_view s);

/// True for afec and the *_afec variants.
bool uses_expansion(Method m);
/// The importance estimator behind mas/si/rwalk and their AFEC variants.
std::optional<ImportanceMethod> importance_method(Method m);

/// Continual-learning state carried between tasks. Its size depends only on
/// the parameter count, never on how many tasks have been seen.
struct RegState {
  DiagGaussian anchor;          // theta*_{1:t} and the task-averaged Fisher F_{1:t}
  ParamVector importance;       // xi for mas / si / rwalk
  ParamVector path_accum;       // per-task path integral (si, rwalk)
  ParamVector prev_params;      // parameters at the start of the current task
  ParamVector running_fisher;   // per-task Fisher EMA (rwalk)
  int task_count = 0;

  static RegState initial(std::span<const double> params);
  void validate() const;

  bool operator==(const RegState&) const = default;
};

struct AfecConfig {
  double lambda = 0.0;
  double lambda_e = 0.0;
  std::size_t expansion_epochs = 0;
  ExpansionInit expansion_init = ExpansionInit::copy_main;
};

struct ImportanceConfig {
  double si_damping = 0.1;
  double rwalk_decay = 0.9;

  bool operator==(const ImportanceConfig&) const = default;
};

struct PenaltyValue {
  double value = 0.0;
  ParamVector grad;
};

/// (lambda / 2) * sum_i F_i (theta_i - theta*_i)^2 and its gradient.
PenaltyValue quadratic_penalty(std::span<const double> params, const DiagGaussian& anchor,
                               double lambda);

/// Adds the same penalty, with arbitrary non-negative weights, into `grad`.
/// Does nothing when lambda == 0.
double add_quadratic_penalty(std::span<const double> params, std::span<const double> center,
                             std::span<const double> weight, double lambda, std::span<double> grad);

/// Data loss plus the old-task anchor penalty (weights `old_weight`, centre
/// state.anchor.mean) plus the expansion penalty. `expanded` may be null.
double add_anchor_penalties(std::span<const double> params, const RegState& state,
                            std::span<const double> old_weight, const DiagGaussian* expanded,
                            double lambda, double lambda_e, std::span<double> grad);

/// L_B + (lambda/2) sum F (theta - theta*)^2 + (lambda_e/2) sum F_e (theta - theta*_e)^2.
LossGrad afec_total_loss(const Network& net, const BatchView& batch, LossKind kind,
                         const RegState& state, const DiagGaussian* expanded,
                         const AfecConfig& cfg);

/// Same objective with the method's importance xi in place of the Fisher.
LossGrad reg_with_afec_loss(const Network& net, const BatchView& batch, LossKind kind,
                            const RegState& state, const DiagGaussian* expanded, double lambda,
                            double lambda_e, ImportanceMethod method);

/// Synaptic expansion: trains a temporary network on the task alone and
/// returns its Laplace anchor. `net` is never modified.
DiagGaussian train_expanded(const Network& net, const TaskDataset& task, const AfecConfig& cfg,
                            const TrainSpec& train, std::uint64_t shuffle_key);

/// One optimizer step: data-loss gradient and resulting parameter change.
struct PathStep {
  std::span<const double> grad;
  std::span<const double> delta;
};

/// MAS sensitivity data, typically the task's training split.
struct MasBatch {
  const Network* net = nullptr;
  BatchView batch;
};

/// End of a task; `params` are the final parameters of that task.
struct TaskBoundary {
  std::span<const double> params;
};

using StepInfo = std::variant<PathStep, MasBatch, TaskBoundary>;

/// Folds one event into the state's importance bookkeeping. Events a method
/// does not use are ignored. Importance never goes negative.
void importance_update(ImportanceMethod method, RegState& state, const StepInfo& info,
                       const ImportanceConfig& cfg = {});

}  // namespace afec
