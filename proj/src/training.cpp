#include "afec/training.hpp"

#include <numeric>
#include <vector>

#include "afec/errors.hpp"
#include "afec/rng.hpp"

namespace afec {

double train_on_task(Network& net, const TaskDataset& task, const TrainSpec& spec,
                     std::uint64_t shuffle_key, const TrainHooks& hooks) {
  if (spec.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const std::size_t n = task.train.size();
  if (n == 0) throw InputError(task.name + ": empty training split");

  const std::size_t begin = hooks.trainable.begin;
  const std::size_t end = hooks.trainable.end == 0 ? net.param_count() : hooks.trainable.end;
  if (begin >= end || end > net.param_count()) throw ShapeError("invalid trainable range");

  Optimizer opt(spec.optimizer, end - begin);
  std::vector<std::size_t> order(n);
  std::vector<double> data_grad;
  std::vector<double> before;
  double epoch_loss = 0.0;

  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(derive_key(shuffle_key, epoch));
    shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const std::size_t stop = std::min(n, start + spec.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      LossGrad lg = loss_and_grad(net, task.train_view(rows), task.loss_kind());
      epoch_loss += lg.loss * static_cast<double>(rows.size());
      if (hooks.observer) data_grad = lg.grad;
      if (hooks.penalty) hooks.penalty(net.params(), lg.grad);

      auto params = net.params();
      if (hooks.observer) before.assign(params.begin(), params.end());
      opt.step(params.subspan(begin, end - begin),
               std::span<const double>(lg.grad).subspan(begin, end - begin));
      if (hooks.observer) {
        for (std::size_t i = 0; i < before.size(); ++i) before[i] = params[i] - before[i];
        hooks.observer(data_grad, before);
      }
    }
  }
  return epoch_loss / static_cast<double>(n);
}

}  // namespace afec
