#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "afec/errors.hpp"
#include "afec/experiment.hpp"

using namespace afec;
using nlohmann::json;

namespace {

json tiny() {
  return json::parse(R"({
    "version": 1,
    "benchmark": {"kind": "conflicting_pair", "num_classes": 4, "samples_per_class": 6, "input_dim": 5},
    "methods": ["afec"],
    "lambda": [10],
    "lambda_e": [0.1, 1, 10],
    "seeds": [0, 1],
    "epochs": 2,
    "batch_size": 8,
    "arch": {"hidden": [8], "activation": "tanh"}
  })");
}

std::string error_of(const json& j) {
  try {
    parse_experiment(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config: parse, serialize, parse is the identity") {
  const ExperimentConfig a = parse_experiment(tiny());
  CHECK(a.lambda_e == std::vector<double>{0.1, 1.0, 10.0});
  CHECK(a.hidden == std::vector<std::size_t>{8});
  CHECK(a.activation == Activation::tanh);
  const ExperimentConfig b = parse_experiment(experiment_to_json(a));
  CHECK(a == b);
  CHECK(experiment_to_json(b) == experiment_to_json(a));

  json full = tiny();
  full["expansion"] = {{"epochs", 3}, {"init", "fresh_random"}};
  full["importance"] = {{"si_damping", 0.5}, {"rwalk_decay", 0.5}};
  full["optimizer"] = {{"kind", "sgd"}, {"lr", 0.01}, {"momentum", 0.9}};
  full["benchmark"]["data_seed"] = 42;
  const ExperimentConfig c = parse_experiment(full);
  CHECK(c.expansion_epochs == std::optional<std::size_t>{3});
  CHECK(parse_experiment(experiment_to_json(c)) == c);
}

TEST_CASE("config: errors name the field path") {
  json j = tiny();
  j["benchmark"]["colour"] = 1;
  CHECK(error_of(j) == "benchmark.colour: unknown key");
  j = tiny();
  j["extra"] = true;
  CHECK(error_of(j) == "extra: unknown key");
  j = tiny();
  j["methods"] = {"ewc", "lwf"};
  CHECK(error_of(j).rfind("methods[1]", 0) == 0);
  j = tiny();
  j["lambda"] = {1, -2};
  CHECK(error_of(j).rfind("lambda[1]", 0) == 0);
  j = tiny();
  j["arch"]["hidden"] = {8, "wide"};
  CHECK(error_of(j).rfind("arch.hidden[1]", 0) == 0);
  j = tiny();
  j.erase("version");
  CHECK(error_of(j).rfind("version", 0) == 0);
  j = tiny();
  j["seeds"] = {1, 1};
  CHECK(error_of(j).rfind("seeds", 0) == 0);
  j = tiny();
  j["optimizer"] = {{"kind", "rmsprop"}};
  CHECK(error_of(j).rfind("optimizer.kind", 0) == 0);
  j = tiny();
  j["benchmark"] = {{"kind", "idx_split"}, {"images", "/nonexistent"}, {"labels", "/nonexistent"}};
  CHECK(error_of(j).rfind("benchmark.images", 0) == 0);
  CHECK_THROWS_AS(load_experiment("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("build_tasks follows the benchmark kind") {
  ExperimentConfig c = parse_experiment(tiny());
  auto tasks = build_tasks(c.benchmark, 3);
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].num_classes == 4);
  CHECK(tasks[0].seed == 3);
  c.benchmark.data_seed = 9;
  CHECK(build_tasks(c.benchmark, 3)[0].seed == 9);
  c.benchmark.kind = BenchmarkKind::angular_sequence;
  c.benchmark.num_tasks = 5;
  CHECK(build_tasks(c.benchmark, 3).size() == 5);
}

TEST_CASE("grid: 3 lambda_e x 2 seeds gives 6 runs and 3 rows") {
  const ExperimentConfig c = parse_experiment(tiny());
  const GridResult g = run_grid(c, 1);
  REQUIRE(g.cells.size() == 3);
  std::size_t runs = 0;
  for (const auto& cell : g.cells) {
    CHECK(cell.runs.size() == 2);
    runs += cell.runs.size();
    CHECK(cell.runs[0].config.seed == 0);
    CHECK(cell.runs[1].config.seed == 1);
  }
  CHECK(runs == 6);
  std::istringstream csv(grid_csv(g));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "method,lambda,lambda_e,seeds,mean_ACC");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.rfind("afec,10,", 0) == 0);
  }
  CHECK(rows == 3);
}

TEST_CASE("grid: results do not depend on the job count") {
  const ExperimentConfig c = parse_experiment(tiny());
  const GridResult a = run_grid(c, 1), b = run_grid(c, 4);
  REQUIRE(a.cells.size() == b.cells.size());
  CHECK(a.best == b.best);
  CHECK(grid_csv(a) == grid_csv(b));
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    for (std::size_t s = 0; s < a.cells[i].runs.size(); ++s)
      CHECK(a.cells[i].runs[s].checksum() == b.cells[i].runs[s].checksum());
  CHECK_THROWS_AS(run_grid(c, 0), ConfigError);
}

TEST_CASE("best cell tie-breaking") {
  auto cell = [](Method m, double l, double le, double acc) {
    GridCell c{m, l, le, {}};
    RunResult r;
    r.acc_matrix.a = {{acc}};
    c.runs.push_back(r);
    return c;
  };
  CHECK(best_cell({cell(Method::afec, 1, 1, 0.5), cell(Method::afec, 1, 1, 0.75)}) == 1);
  CHECK(best_cell({cell(Method::afec, 1, 10, 0.5), cell(Method::afec, 1, 0.1, 0.5)}) == 1);
  CHECK(best_cell({cell(Method::afec, 100, 1, 0.5), cell(Method::afec, 10, 1, 0.5)}) == 1);
  CHECK(best_cell({cell(Method::ewc, 1, 1, 0.5), cell(Method::afec, 1, 1, 0.5)}) == 0);
  CHECK_THROWS_AS(best_cell({}), InputError);
}
