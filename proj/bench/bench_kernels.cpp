// OpenMP kernels against the serial reference. Set OMP_NUM_THREADS to vary
// the thread count of the parallel variants.

#include <benchmark/benchmark.h>

#include <map>
#include <vector>

#include "afec/kernels.hpp"
#include "afec/log.hpp"
#include "afec/posterior.hpp"
#include "afec/rng.hpp"
#include "afec/tasks.hpp"

using namespace afec;

namespace {

struct Fixture {
  TaskDataset task;
  Network net;

  explicit Fixture(std::size_t samples_per_class)
      : task([&] {
          AngularTaskSpec s;
          s.samples_per_class = samples_per_class;
          s.seed = 1;
          return gen_angular_task(AngularLayout::identity(10), s);
        }()),
        net(NetworkSpec{16, {64, 64}, Activation::relu, {task.head_spec()}}, 1) {}
};

const Fixture& fixture(std::size_t spc) {
  static std::map<std::size_t, Fixture> cache;
  return cache.try_emplace(spc, spc).first->second;
}

template <bool Parallel>
void BM_accumulate(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(f.net.param_count());
  const BatchView b = f.task.train_view();
  for (auto _ : state) {
    const double loss =
        Parallel ? kernels::accumulate(f.net, b, LossKind::angular_mse, kernels::Reduce::square, 1.0, out)
                 : kernels::reference::accumulate(f.net, b, LossKind::angular_mse,
                                                  kernels::Reduce::square, 1.0, out);
    benchmark::DoNotOptimize(loss);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(b.size()));
}

template <bool Parallel>
void BM_forward_rows(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  const BatchView b = f.task.train_view();
  for (auto _ : state) {
    Matrix y = Parallel ? kernels::forward_rows(f.net, b) : kernels::reference::forward_rows(f.net, b);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(b.size()));
}

void BM_fisher(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    ParamVector fi = estimate_diag_fisher(f.net, f.task);
    benchmark::DoNotOptimize(fi.data());
  }
}

}  // namespace

BENCHMARK(BM_accumulate<false>)->Name("accumulate/reference")->Arg(50)->Arg(500);
BENCHMARK(BM_accumulate<true>)->Name("accumulate/openmp")->Arg(50)->Arg(500);
BENCHMARK(BM_forward_rows<false>)->Name("forward_rows/reference")->Arg(50)->Arg(500);
BENCHMARK(BM_forward_rows<true>)->Name("forward_rows/openmp")->Arg(50)->Arg(500);
BENCHMARK(BM_fisher)->Name("estimate_diag_fisher")->Arg(50)->Arg(500);

int main(int argc, char** argv) {
  log::set_level(log::Level::quiet);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
