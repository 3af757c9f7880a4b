#include "afec/experiment.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "afec/errors.hpp"
#include "afec/metrics.hpp"
#include "afec/report.hpp"
#include "afec/rng.hpp"

namespace afec {

using nlohmann::json;

std::string_view to_string(BenchmarkKind k) {
  switch (k) {
    case BenchmarkKind::conflicting_pair:
      return "conflicting_pair";
    case BenchmarkKind::angular_sequence:
      return "angular_sequence";
    case BenchmarkKind::idx_split:
      return "idx_split";
  }
  return "conflicting_pair";
}

namespace {

BenchmarkKind parse_benchmark_kind(const std::string& s, const std::string& path) {
  for (auto k : {BenchmarkKind::conflicting_pair, BenchmarkKind::angular_sequence,
                 BenchmarkKind::idx_split})
    if (to_string(k) == s) return k;
  throw ConfigError(path + ": unknown benchmark kind '" + s + "'");
}

// Strict reader over one JSON object: every key must be consumed exactly once.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* get(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void opt(const char* key, T& out) {
    if (const json* v = get(key)) out = convert<T>(*v, field(key));
  }

  template <typename T>
  void opt_list(const char* key, std::vector<T>& out) {
    const json* v = get(key);
    if (!v) return;
    const std::string f = field(key);
    if (!v->is_array()) throw ConfigError(f + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      out.push_back(convert<T>((*v)[i], f + "[" + std::to_string(i) + "]"));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(field(key.c_str()) + ": unknown key");
  }

  template <typename T>
  static T convert(const json& v, const std::string& f) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(f + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(f + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(f + ": expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ConfigError(f + ": must be finite");
      return d;
    } else {
      if (!v.is_number_integer()) throw ConfigError(f + ": expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() &&
          v.get<long long>() < 0)
        throw ConfigError(f + ": must be non-negative");
      return v.get<T>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::validate() const {
  if (version != 1) throw ConfigError("version: unsupported version " + std::to_string(version));
  const auto& b = benchmark;
  if (b.kind != BenchmarkKind::idx_split) {
    if (b.num_classes < 2) throw ConfigError("benchmark.num_classes: must be >= 2");
    if (b.samples_per_class < 2) throw ConfigError("benchmark.samples_per_class: must be >= 2");
    if (b.input_dim < 1) throw ConfigError("benchmark.input_dim: must be >= 1");
    if (!(b.cluster_spread > 0.0)) throw ConfigError("benchmark.cluster_spread: must be > 0");
  }
  if (b.kind == BenchmarkKind::angular_sequence && b.num_tasks < 1)
    throw ConfigError("benchmark.num_tasks: must be >= 1");
  if (b.kind == BenchmarkKind::idx_split) {
    if (b.images.empty() || !std::filesystem::exists(b.images))
      throw ConfigError("benchmark.images: file not found '" + b.images + "'");
    if (b.labels.empty() || !std::filesystem::exists(b.labels))
      throw ConfigError("benchmark.labels: file not found '" + b.labels + "'");
    if (b.classes_per_task < 1) throw ConfigError("benchmark.classes_per_task: must be >= 1");
  }
  if (methods.empty()) throw ConfigError("methods: must not be empty");
  if (lambda.empty()) throw ConfigError("lambda: must not be empty");
  if (lambda_e.empty()) throw ConfigError("lambda_e: must not be empty");
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (!(lambda[i] >= 0.0)) throw ConfigError("lambda[" + std::to_string(i) + "]: must be >= 0");
  for (std::size_t i = 0; i < lambda_e.size(); ++i)
    if (!(lambda_e[i] >= 0.0))
      throw ConfigError("lambda_e[" + std::to_string(i) + "]: must be >= 0");
  if (seeds.empty()) throw ConfigError("seeds: must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds: values must be distinct");
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr: must be > 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0)
    throw ConfigError("optimizer.momentum: must lie in [0, 1)");
  for (std::size_t i = 0; i < hidden.size(); ++i)
    if (hidden[i] < 1) throw ConfigError("arch.hidden[" + std::to_string(i) + "]: must be >= 1");
  if (!(importance.si_damping > 0.0)) throw ConfigError("importance.si_damping: must be > 0");
  if (!(importance.rwalk_decay >= 0.0 && importance.rwalk_decay < 1.0))
    throw ConfigError("importance.rwalk_decay: must lie in [0, 1)");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

ExperimentConfig parse_experiment(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  if (!r.has("version")) throw ConfigError("version: missing");
  r.opt("version", c.version);
  if (const json* b = r.get("benchmark")) {
    Reader br(*b, "benchmark");
    std::string kind = std::string(to_string(c.benchmark.kind));
    br.opt("kind", kind);
    c.benchmark.kind = parse_benchmark_kind(kind, "benchmark.kind");
    br.opt("num_classes", c.benchmark.num_classes);
    br.opt("num_tasks", c.benchmark.num_tasks);
    br.opt("samples_per_class", c.benchmark.samples_per_class);
    br.opt("input_dim", c.benchmark.input_dim);
    br.opt("cluster_spread", c.benchmark.cluster_spread);
    br.opt("center_scale", c.benchmark.center_scale);
    if (const json* v = br.get("data_seed"))
      c.benchmark.data_seed = Reader::convert<std::uint64_t>(*v, "benchmark.data_seed");
    br.opt("images", c.benchmark.images);
    br.opt("labels", c.benchmark.labels);
    br.opt("classes_per_task", c.benchmark.classes_per_task);
    br.finish();
  }
  if (const json* v = r.get("methods")) {
    if (!v->is_array()) throw ConfigError("methods: expected an array");
    c.methods.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string f = "methods[" + std::to_string(i) + "]";
      const auto name = Reader::convert<std::string>((*v)[i], f);
      try {
        c.methods.push_back(parse_method(name));
      } catch (const ConfigError& e) {
        throw ConfigError(f + ": " + e.what());
      }
    }
  }
  r.opt_list("lambda", c.lambda);
  r.opt_list("lambda_e", c.lambda_e);
  r.opt_list("seeds", c.seeds);
  r.opt("epochs", c.epochs);
  r.opt("batch_size", c.batch_size);
  if (const json* v = r.get("optimizer")) {
    Reader orr(*v, "optimizer");
    std::string kind = c.optimizer.kind == OptimizerSpec::Kind::adam ? "adam" : "sgd";
    orr.opt("kind", kind);
    if (kind == "adam")
      c.optimizer.kind = OptimizerSpec::Kind::adam;
    else if (kind == "sgd")
      c.optimizer.kind = OptimizerSpec::Kind::sgd;
    else
      throw ConfigError("optimizer.kind: unknown optimizer '" + kind + "'");
    orr.opt("lr", c.optimizer.lr);
    orr.opt("momentum", c.optimizer.momentum);
    orr.finish();
  }
  if (const json* v = r.get("arch")) {
    Reader ar(*v, "arch");
    ar.opt_list("hidden", c.hidden);
    std::string act(to_string(c.activation));
    ar.opt("activation", act);
    try {
      c.activation = parse_activation(act);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("arch.activation: ") + e.what());
    }
    ar.finish();
  }
  if (const json* v = r.get("expansion")) {
    Reader er(*v, "expansion");
    if (const json* e = er.get("epochs"))
      c.expansion_epochs = Reader::convert<std::size_t>(*e, "expansion.epochs");
    std::string init(to_string(c.expansion_init));
    er.opt("init", init);
    try {
      c.expansion_init = parse_expansion_init(init);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("expansion.init: ") + e.what());
    }
    er.finish();
  }
  if (const json* v = r.get("importance")) {
    Reader ir(*v, "importance");
    ir.opt("si_damping", c.importance.si_damping);
    ir.opt("rwalk_decay", c.importance.rwalk_decay);
    ir.finish();
  }
  r.opt("eval_every_task", c.eval_every_task);
  r.opt("output_dir", c.output_dir);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_experiment(j);
}

json experiment_to_json(const ExperimentConfig& c) {
  json bench = {{"kind", to_string(c.benchmark.kind)},
                {"num_classes", c.benchmark.num_classes},
                {"num_tasks", c.benchmark.num_tasks},
                {"samples_per_class", c.benchmark.samples_per_class},
                {"input_dim", c.benchmark.input_dim},
                {"cluster_spread", c.benchmark.cluster_spread},
                {"center_scale", c.benchmark.center_scale},
                {"images", c.benchmark.images},
                {"labels", c.benchmark.labels},
                {"classes_per_task", c.benchmark.classes_per_task}};
  if (c.benchmark.data_seed) bench["data_seed"] = *c.benchmark.data_seed;
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  json expansion = {{"init", to_string(c.expansion_init)}};
  if (c.expansion_epochs) expansion["epochs"] = *c.expansion_epochs;
  return {{"version", c.version},
          {"benchmark", bench},
          {"methods", methods},
          {"lambda", c.lambda},
          {"lambda_e", c.lambda_e},
          {"seeds", c.seeds},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer",
           {{"kind", c.optimizer.kind == OptimizerSpec::Kind::adam ? "adam" : "sgd"},
            {"lr", c.optimizer.lr},
            {"momentum", c.optimizer.momentum}}},
          {"arch", {{"hidden", c.hidden}, {"activation", to_string(c.activation)}}},
          {"expansion", expansion},
          {"importance",
           {{"si_damping", c.importance.si_damping}, {"rwalk_decay", c.importance.rwalk_decay}}},
          {"eval_every_task", c.eval_every_task},
          {"output_dir", c.output_dir}};
}

std::vector<TaskDataset> build_tasks(const BenchmarkSpec& b, std::uint64_t run_seed) {
  const std::uint64_t seed = b.data_seed.value_or(run_seed);
  AngularTaskSpec spec;
  spec.samples_per_class = b.samples_per_class;
  spec.input_dim = b.input_dim;
  spec.cluster_spread = b.cluster_spread;
  spec.center_scale = b.center_scale;
  spec.seed = seed;
  switch (b.kind) {
    case BenchmarkKind::conflicting_pair: {
      auto [a, bb] = make_conflicting_pair(b.num_classes, spec);
      return {std::move(a), std::move(bb)};
    }
    case BenchmarkKind::angular_sequence:
      return make_angular_sequence(b.num_tasks, b.num_classes, spec);
    case BenchmarkKind::idx_split:
      return split_tasks(load_idx(b.images, b.labels), b.classes_per_task, seed);
  }
  return {};
}

SequenceConfig sequence_config(const ExperimentConfig& cfg, Method method, double lambda,
                               double lambda_e, std::uint64_t seed) {
  SequenceConfig s;
  s.method = method;
  s.lambda = lambda;
  s.lambda_e = lambda_e;
  s.epochs = cfg.epochs;
  s.batch_size = cfg.batch_size;
  s.optimizer = cfg.optimizer;
  s.seed = seed;
  s.eval_every_task = cfg.eval_every_task;
  s.hidden = cfg.hidden;
  s.activation = cfg.activation;
  s.expansion_epochs = cfg.expansion_epochs;
  s.expansion_init = cfg.expansion_init;
  s.importance = cfg.importance;
  return s;
}

double GridCell::mean_acc() const {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += acc(r.acc_matrix);
  return s / static_cast<double>(runs.size());
}

std::size_t best_cell(const std::vector<GridCell>& cells) {
  if (cells.empty()) throw InputError("best_cell: no cells");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const GridCell& a = cells[i];
    const GridCell& b = cells[best];
    const double ma = a.mean_acc(), mb = b.mean_acc();
    if (ma != mb) {
      if (ma > mb) best = i;
    } else if (a.lambda_e != b.lambda_e) {
      if (a.lambda_e < b.lambda_e) best = i;
    } else if (a.lambda < b.lambda) {
      best = i;
    }
    // Remaining ties keep the earlier cell, i.e. earlier method order.
  }
  return best;
}

GridResult run_grid(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  if (jobs < 1) throw ConfigError("--jobs: must be >= 1");
  GridResult g;
  for (Method m : cfg.methods)
    for (double l : cfg.lambda)
      for (double le : cfg.lambda_e) g.cells.push_back({m, l, le, {}});
  const std::size_t n_seeds = cfg.seeds.size();
  const std::size_t total = g.cells.size() * n_seeds;
  std::vector<RunResult> out(total);
  std::vector<std::exception_ptr> errors(total);

  // Tasks depend only on the seed (and the benchmark), so build them once per seed.
  std::vector<std::vector<TaskDataset>> tasks(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) tasks[s] = build_tasks(cfg.benchmark, cfg.seeds[s]);

#pragma omp parallel for num_threads(jobs) schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(total); ++k) {
    const std::size_t c = static_cast<std::size_t>(k) / n_seeds;
    const std::size_t s = static_cast<std::size_t>(k) % n_seeds;
    try {
      const GridCell& cell = g.cells[c];
      out[k] = run_sequence(
          sequence_config(cfg, cell.method, cell.lambda, cell.lambda_e, cfg.seeds[s]), tasks[s]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t k = 0; k < total; ++k) g.cells[k / n_seeds].runs.push_back(std::move(out[k]));
  g.best = best_cell(g.cells);
  return g;
}

std::string grid_csv(const GridResult& g) {
  std::ostringstream os;
  os << "method,lambda,lambda_e,seeds,mean_ACC\n";
  for (const auto& c : g.cells) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", c.mean_acc());
    os << to_string(c.method) << ',' << format_number(c.lambda) << ','
       << format_number(c.lambda_e) << ',' << c.runs.size() << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace afec
