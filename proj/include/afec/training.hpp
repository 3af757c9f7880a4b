#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "afec/nn.hpp"
#include "afec/tasks.hpp"

namespace afec {

struct TrainSpec {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  OptimizerSpec optimizer;
};

/// Extra objective term: adds its gradient into `grad` and returns its value.
using PenaltyFn = std::function<double(std::span<const double> params, std::span<double> grad)>;

/// Called after every optimizer step with the unpenalised data-loss gradient
/// and the parameter change that step produced.
using StepObserver =
    std::function<void(std::span<const double> data_grad, std::span<const double> delta)>;

struct ParamRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // 0 means "to the end of the vector"
};

struct TrainHooks {
  PenaltyFn penalty;
  StepObserver observer;
  ParamRange trainable;
};

/// Minibatch training on the task's train split. The optimizer starts fresh;
/// epoch e is shuffled with a key derived from (shuffle_key, e). Returns the
/// mean data loss of the last epoch.
double train_on_task(Network& net, const TaskDataset& task, const TrainSpec& spec,
                     std::uint64_t shuffle_key, const TrainHooks& hooks = {});

}  // namespace afec
