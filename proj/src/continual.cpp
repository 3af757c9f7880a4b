#include "afec/continual.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "afec/errors.hpp"
#include "afec/kernels.hpp"
#include "afec/log.hpp"
#include "afec/posterior.hpp"
#include "afec/rng.hpp"

namespace afec {

using nlohmann::json;

void SequenceConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (!(lambda_e >= 0.0) || !std::isfinite(lambda_e))
    throw ConfigError("lambda_e must be finite and >= 0");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
}

NetworkSpec sequence_network_spec(const SequenceConfig& cfg, std::span<const TaskDataset> tasks) {
  if (tasks.empty()) throw InputError("task sequence is empty");
  NetworkSpec spec;
  spec.input_dim = tasks.front().input_dim();
  spec.hidden = cfg.hidden;
  spec.activation = cfg.activation;
  std::set<int> heads;
  for (const auto& t : tasks) {
    if (t.input_dim() != spec.input_dim)
      throw InputError(t.name + ": input dim differs from the first task");
    if (!heads.insert(t.head).second) throw InputError(t.name + ": duplicate head id");
    spec.heads.push_back(t.head_spec());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Evaluation

double evaluate(const Network& net, const TaskDataset& task) {
  if (!net.has_head(task.head))
    throw ConfigError("network has no head " + std::to_string(task.head) + " for " + task.name);
  const BatchView view = task.test_view();
  const Matrix out = forward(net, view);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < out.rows; ++i) {
    const auto y = out.row(i);
    const int label = task.test.labels[i];
    std::size_t predicted = 0;
    if (task.kind == TaskKind::classification) {
      for (std::size_t c = 1; c < y.size(); ++c)
        if (y[c] > y[predicted]) predicted = c;
    } else {
      const double phi = std::atan2(y[1], y[0]);
      double best = circular_distance(phi, task.class_angles[0]);
      for (std::size_t c = 1; c < task.class_angles.size(); ++c) {
        const double d = circular_distance(phi, task.class_angles[c]);
        if (d < best) {
          best = d;
          predicted = c;
        }
      }
    }
    if (predicted == static_cast<std::size_t>(label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(out.rows);
}

double transfer_probe(const Network& net, const TaskDataset& probe_task, std::size_t epochs,
                      double lr, std::size_t batch_size) {
  if (probe_task.input_dim() != net.spec().input_dim)
    throw ShapeError("probe input dim does not match network");
  Network probe = net;
  if (probe.has_head(probe_task.head)) {
    // Replacing in place keeps the head's slot but restarts it from its init.
    probe.reinit_head(probe_task.head);
    if (probe.head(probe_task.head).out_dim != probe_task.output_dim())
      throw ShapeError("existing probe head has the wrong output dim");
  } else {
    probe.add_head(probe_task.head_spec());
  }
  if (epochs > 0) {
    const DenseLayer& head = probe.head(probe_task.head);
    TrainSpec spec;
    spec.epochs = epochs;
    spec.batch_size = batch_size;
    spec.optimizer.lr = lr;
    TrainHooks hooks;
    hooks.trainable = {head.offset, head.end()};
    train_on_task(probe, probe_task, spec, derive_key(net.seed(), streams::kProbe), hooks);
  }
  return evaluate(probe, probe_task);
}

std::vector<double> random_init_baseline(std::span<const TaskDataset> tasks,
                                         const NetworkSpec& arch,
                                         std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw InputError("random_init_baseline needs at least one seed");
  std::vector<double> abar(tasks.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    const Network net(arch, seed);
    for (std::size_t k = 0; k < tasks.size(); ++k) abar[k] += evaluate(net, tasks[k]);
  }
  for (double& v : abar) v /= static_cast<double>(seeds.size());
  return abar;
}

// ---------------------------------------------------------------------------
// Digests

std::uint64_t digest(std::span<const double> values, std::uint64_t h) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t digest(const RegState& s) {
  std::uint64_t h = digest(s.anchor.mean);
  h = digest(s.anchor.precision, h);
  h = digest(s.importance, h);
  h = digest(s.path_accum, h);
  h = digest(s.prev_params, h);
  h = digest(s.running_fisher, h);
  const double t = s.task_count;
  return digest(std::span<const double>(&t, 1), h);
}

std::uint64_t RunResult::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& row : acc_matrix.a) h = digest(row, h);
  h = digest(acc_matrix.abar, h);
  for (const auto& p : acc_matrix.pre) {
    const double v = p.value_or(-1.0);
    h = digest(std::span<const double>(&v, 1), h);
  }
  h = digest(per_task_new_accuracy, h);
  h ^= state_digest;
  h *= 0x100000001b3ULL;
  h ^= params_digest;
  h *= 0x100000001b3ULL;
  return h;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

std::uint64_t task_key(std::uint64_t seed, std::uint64_t stream, std::size_t t) {
  return derive_key(derive_key(seed, stream), t);
}

}  // namespace

RunResult run_sequence(const SequenceConfig& cfg, std::span<const TaskDataset> tasks,
                       const RunOptions& opts) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const NetworkSpec spec = sequence_network_spec(cfg, tasks);
  const std::size_t T = tasks.size();

  Network net(spec, cfg.seed);
  RegState state = RegState::initial(net.params());
  AccMatrix m;
  const std::uint64_t seeds[] = {cfg.seed};
  m.abar = random_init_baseline(tasks, spec, seeds);
  m.pre.assign(T, std::nullopt);
  std::size_t start = 0;

  if (opts.resume != nullptr) {
    const RunCheckpoint& cp = *opts.resume;
    if (cp.seed != cfg.seed) throw ConfigError("checkpoint seed does not match config seed");
    if (cp.net.spec() != spec) throw ConfigError("checkpoint network does not match task sequence");
    if (cp.task_count < 0 || static_cast<std::size_t>(cp.task_count) > T ||
        cp.progress.tasks() != static_cast<std::size_t>(cp.task_count))
      throw ConfigError("checkpoint task_count is inconsistent");
    net = cp.net;
    state = cp.state;
    m = cp.progress;
    m.pre.resize(T);
    start = static_cast<std::size_t>(cp.task_count);
  }

  const auto imp = importance_method(cfg.method);
  const bool penalised = cfg.method != Method::finetune;
  const bool expands = uses_expansion(cfg.method) && cfg.lambda_e > 0.0;

  TrainSpec train;
  train.epochs = cfg.epochs;
  train.batch_size = cfg.batch_size;
  train.optimizer = cfg.optimizer;

  AfecConfig afec_cfg;
  afec_cfg.lambda = cfg.lambda;
  afec_cfg.lambda_e = cfg.lambda_e;
  afec_cfg.expansion_epochs = cfg.expansion_budget();
  afec_cfg.expansion_init = cfg.expansion_init;

  for (std::size_t t = start; t < T; ++t) {
    const TaskDataset& task = tasks[t];
    try {
      if (cfg.eval_every_task && t > 0) m.pre[t] = evaluate(net, task);

      // Synaptic expansion.
      std::optional<DiagGaussian> expanded;
      if (expands)
        expanded = train_expanded(net, task, afec_cfg, train, task_key(cfg.seed, streams::kExpansion, t));

      // Synaptic convergence.
      TrainHooks hooks;
      const bool old_penalty = penalised && state.task_count > 0 && cfg.lambda > 0.0;
      if (old_penalty || expanded) {
        const std::span<const double> weight =
            imp ? std::span<const double>(state.importance) : state.anchor.precision;
        const double lambda = old_penalty ? cfg.lambda : 0.0;
        const DiagGaussian* exp_ptr = expanded ? &*expanded : nullptr;
        const double lambda_e = expanded ? cfg.lambda_e : 0.0;
        hooks.penalty = [&, weight, lambda, exp_ptr, lambda_e](std::span<const double> params,
                                                               std::span<double> grad) {
          return add_anchor_penalties(params, state, weight, exp_ptr, lambda, lambda_e, grad);
        };
      }
      if (imp == ImportanceMethod::si || imp == ImportanceMethod::rwalk) {
        hooks.observer = [&](std::span<const double> g, std::span<const double> d) {
          importance_update(*imp, state, PathStep{g, d}, cfg.importance);
        };
      }
      train_on_task(net, task, train, task_key(cfg.seed, streams::kShuffle, t), hooks);

      // Anchor and Fisher update.
      const ParamVector fisher = estimate_diag_fisher(net, task);
      state.anchor.precision =
          fisher_running_average(state.anchor.precision, fisher, state.task_count + 1);
      state.anchor.mean = net.flatten();
      if (imp == ImportanceMethod::mas)
        importance_update(*imp, state, MasBatch{&net, task.train_view()}, cfg.importance);
      if (imp)
        importance_update(*imp, state, TaskBoundary{net.params()}, cfg.importance);
      else
        state.prev_params = net.flatten();
      ++state.task_count;

      std::vector<double> row(t + 1);
      for (std::size_t k = 0; k <= t; ++k) row[k] = evaluate(net, tasks[k]);
      m.a.push_back(std::move(row));
    } catch (const RunError&) {
      throw;
    } catch (const std::exception& e) {
      throw RunError(static_cast<int>(t), e.what());
    }

    std::ostringstream line;
    line << std::fixed << std::setprecision(4) << "method=" << to_string(cfg.method)
         << " seed=" << cfg.seed << " task=" << t + 1 << " A_tt=" << m.a[t][t]
         << " ACC=" << row_mean(m, t);
    log::info(line.str());

    if (opts.on_task_end) opts.on_task_end(RunCheckpoint{net, state, cfg.seed, state.task_count, m});
  }

  RunResult r;
  r.acc_matrix = std::move(m);
  for (std::size_t i = 0; i < r.acc_matrix.tasks(); ++i)
    r.per_task_new_accuracy.push_back(r.acc_matrix.a[i][i]);
  r.config = cfg;
  r.state_digest = digest(state);
  r.params_digest = digest(net.params());
  r.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw FormatError("'" + path + "' must be an object");
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError("missing field '" + path + "." + key + "'");
  return *it;
}

ParamVector vec_from(const json& j, const std::string& path) {
  if (!j.is_array()) throw FormatError("'" + path + "' must be an array");
  ParamVector v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw FormatError("'" + path + "' must hold numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

template <typename T>
T num_from(const json& j, const std::string& path) {
  if (!j.is_number()) throw FormatError("'" + path + "' must be a number");
  return j.get<T>();
}

}  // namespace

json network_to_json(const Network& net) {
  json heads = json::array();
  for (const auto& h : net.spec().heads) heads.push_back({{"id", h.id}, {"dim", h.dim}});
  return {{"input_dim", net.spec().input_dim},
          {"hidden", net.spec().hidden},
          {"activation", to_string(net.spec().activation)},
          {"heads", heads},
          {"seed", net.seed()},
          {"params", net.params()}};
}

Network network_from_json(const json& j) {
  NetworkSpec spec;
  spec.input_dim = num_from<std::size_t>(need(j, "input_dim", "net"), "net.input_dim");
  const json& hidden = need(j, "hidden", "net");
  if (!hidden.is_array()) throw FormatError("'net.hidden' must be an array");
  for (const auto& w : hidden) spec.hidden.push_back(num_from<std::size_t>(w, "net.hidden"));
  const json& act = need(j, "activation", "net");
  if (!act.is_string()) throw FormatError("'net.activation' must be a string");
  try {
    spec.activation = parse_activation(act.get<std::string>());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("'net.activation': ") + e.what());
  }
  const json& heads = need(j, "heads", "net");
  if (!heads.is_array()) throw FormatError("'net.heads' must be an array");
  for (const auto& h : heads)
    spec.heads.push_back({num_from<int>(need(h, "id", "net.heads[]"), "net.heads[].id"),
                          num_from<std::size_t>(need(h, "dim", "net.heads[]"), "net.heads[].dim")});
  const auto seed = num_from<std::uint64_t>(need(j, "seed", "net"), "net.seed");
  Network net;
  try {
    net = Network(spec, seed);
  } catch (const Error& e) {
    throw FormatError(std::string("'net': ") + e.what());
  }
  const ParamVector params = vec_from(need(j, "params", "net"), "net.params");
  if (params.size() != net.param_count())
    throw FormatError("'net.params' has " + std::to_string(params.size()) + " values, expected " +
                      std::to_string(net.param_count()));
  net.unflatten(params);
  return net;
}

json reg_state_to_json(const RegState& s) {
  return {{"anchor", {{"mean", s.anchor.mean}, {"precision", s.anchor.precision}}},
          {"importance", s.importance},
          {"path_accum", s.path_accum},
          {"prev_params", s.prev_params},
          {"running_fisher", s.running_fisher},
          {"task_count", s.task_count}};
}

RegState reg_state_from_json(const json& j) {
  RegState s;
  const json& anchor = need(j, "anchor", "reg_state");
  s.anchor.mean = vec_from(need(anchor, "mean", "reg_state.anchor"), "reg_state.anchor.mean");
  s.anchor.precision =
      vec_from(need(anchor, "precision", "reg_state.anchor"), "reg_state.anchor.precision");
  s.importance = vec_from(need(j, "importance", "reg_state"), "reg_state.importance");
  s.path_accum = vec_from(need(j, "path_accum", "reg_state"), "reg_state.path_accum");
  s.prev_params = vec_from(need(j, "prev_params", "reg_state"), "reg_state.prev_params");
  s.running_fisher = vec_from(need(j, "running_fisher", "reg_state"), "reg_state.running_fisher");
  s.task_count = num_from<int>(need(j, "task_count", "reg_state"), "reg_state.task_count");
  try {
    s.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("'reg_state': ") + e.what());
  }
  return s;
}

std::string serialize_reg_state(const RegState& s) {
  // Fixed-width binary: header, then every vector as raw little-endian doubles.
  s.validate();
  std::string out;
  auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  const std::uint64_t header[] = {0x41464543'53544154ULL, static_cast<std::uint64_t>(s.task_count),
                                  s.anchor.mean.size()};
  put(header, sizeof header);
  for (const ParamVector* v : {&s.anchor.mean, &s.anchor.precision, &s.importance, &s.path_accum,
                               &s.prev_params, &s.running_fisher})
    put(v->data(), v->size() * sizeof(double));
  return out;
}

json acc_matrix_to_json(const AccMatrix& m) {
  json pre = json::array();
  for (const auto& p : m.pre) pre.push_back(p ? json(*p) : json(nullptr));
  return {{"A", m.a}, {"Abar", m.abar}, {"A_pre", pre}};
}

AccMatrix acc_matrix_from_json(const json& j) {
  AccMatrix m;
  const json& a = need(j, "A", "acc_matrix");
  if (!a.is_array()) throw FormatError("'acc_matrix.A' must be an array");
  for (const auto& row : a) m.a.push_back(vec_from(row, "acc_matrix.A[]"));
  m.abar = vec_from(need(j, "Abar", "acc_matrix"), "acc_matrix.Abar");
  if (const auto it = j.find("A_pre"); it != j.end()) {
    if (!it->is_array()) throw FormatError("'acc_matrix.A_pre' must be an array");
    for (const auto& p : *it)
      m.pre.push_back(p.is_null() ? std::nullopt
                                  : std::optional<double>(num_from<double>(p, "acc_matrix.A_pre[]")));
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("'acc_matrix': ") + e.what());
  }
  return m;
}

void save_state(const std::filesystem::path& path, const RunCheckpoint& cp) {
  const json j = {{"version", 1},
                  {"net", network_to_json(cp.net)},
                  {"reg_state", reg_state_to_json(cp.state)},
                  {"rng", {{"kind", "counter"}, {"seed", cp.seed}}},
                  {"task_count", cp.task_count},
                  {"history", acc_matrix_to_json(cp.progress)}};
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump() << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunCheckpoint load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open state file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("state file " + path.string() + " is not valid JSON: " + e.what());
  }
  const json& version = need(j, "version", "state");
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw FormatError("field 'state.version' must be 1");
  RunCheckpoint cp;
  cp.net = network_from_json(need(j, "net", "state"));
  cp.state = reg_state_from_json(need(j, "reg_state", "state"));
  cp.seed = num_from<std::uint64_t>(need(need(j, "rng", "state"), "seed", "state.rng"),
                                    "state.rng.seed");
  cp.task_count = num_from<int>(need(j, "task_count", "state"), "state.task_count");
  cp.progress = acc_matrix_from_json(need(j, "history", "state"));
  if (cp.state.anchor.size() != cp.net.param_count())
    throw FormatError("field 'state.reg_state' does not match the network size");
  if (cp.state.task_count != cp.task_count)
    throw FormatError("field 'state.task_count' disagrees with reg_state.task_count");
  return cp;
}

json sequence_config_to_json(const SequenceConfig& c) {
  return {{"method", to_string(c.method)},
          {"lambda", c.lambda},
          {"lambda_e", c.lambda_e},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer",
           {{"kind", c.optimizer.kind == OptimizerSpec::Kind::adam ? "adam" : "sgd"},
            {"lr", c.optimizer.lr},
            {"momentum", c.optimizer.momentum}}},
          {"seed", c.seed},
          {"eval_every_task", c.eval_every_task},
          {"hidden", c.hidden},
          {"activation", to_string(c.activation)},
          {"expansion_epochs", c.expansion_budget()},
          {"expansion_init", to_string(c.expansion_init)},
          {"si_damping", c.importance.si_damping},
          {"rwalk_decay", c.importance.rwalk_decay}};
}

SequenceConfig sequence_config_from_json(const json& j) {
  SequenceConfig c;
  c.method = parse_method(need(j, "method", "config").get<std::string>());
  c.lambda = num_from<double>(need(j, "lambda", "config"), "config.lambda");
  c.lambda_e = num_from<double>(need(j, "lambda_e", "config"), "config.lambda_e");
  c.epochs = num_from<std::size_t>(need(j, "epochs", "config"), "config.epochs");
  c.batch_size = num_from<std::size_t>(need(j, "batch_size", "config"), "config.batch_size");
  const json& opt = need(j, "optimizer", "config");
  c.optimizer.kind = need(opt, "kind", "config.optimizer").get<std::string>() == "sgd"
                         ? OptimizerSpec::Kind::sgd
                         : OptimizerSpec::Kind::adam;
  c.optimizer.lr = num_from<double>(need(opt, "lr", "config.optimizer"), "config.optimizer.lr");
  c.optimizer.momentum =
      num_from<double>(need(opt, "momentum", "config.optimizer"), "config.optimizer.momentum");
  c.seed = num_from<std::uint64_t>(need(j, "seed", "config"), "config.seed");
  c.eval_every_task = need(j, "eval_every_task", "config").get<bool>();
  c.hidden.clear();
  for (const auto& w : need(j, "hidden", "config")) c.hidden.push_back(w.get<std::size_t>());
  c.activation = parse_activation(need(j, "activation", "config").get<std::string>());
  c.expansion_epochs =
      num_from<std::size_t>(need(j, "expansion_epochs", "config"), "config.expansion_epochs");
  c.expansion_init = parse_expansion_init(need(j, "expansion_init", "config").get<std::string>());
  c.importance.si_damping = num_from<double>(need(j, "si_damping", "config"), "config.si_damping");
  c.importance.rwalk_decay =
      num_from<double>(need(j, "rwalk_decay", "config"), "config.rwalk_decay");
  return c;
}

json run_result_to_json(const RunResult& r) {
  std::ostringstream digest_hex;
  digest_hex << std::hex << std::setw(16) << std::setfill('0') << r.checksum();
  return {{"acc_matrix", acc_matrix_to_json(r.acc_matrix)},
          {"per_task_new_accuracy", r.per_task_new_accuracy},
          {"wall_time", r.wall_time},
          {"config", sequence_config_to_json(r.config)},
          {"state_digest", r.state_digest},
          {"params_digest", r.params_digest},
          {"checksum", digest_hex.str()}};
}

RunResult run_result_from_json(const json& j) {
  RunResult r;
  r.acc_matrix = acc_matrix_from_json(need(j, "acc_matrix", "result"));
  r.per_task_new_accuracy =
      vec_from(need(j, "per_task_new_accuracy", "result"), "result.per_task_new_accuracy");
  r.wall_time = num_from<double>(need(j, "wall_time", "result"), "result.wall_time");
  r.config = sequence_config_from_json(need(j, "config", "result"));
  r.state_digest = num_from<std::uint64_t>(need(j, "state_digest", "result"), "result.state_digest");
  r.params_digest =
      num_from<std::uint64_t>(need(j, "params_digest", "result"), "result.params_digest");
  return r;
}

void write_run_result(const RunResult& r, const std::filesystem::path& dir,
                      const std::string& stem) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / (stem + ".json"));
    if (!out) throw IoError("cannot write " + (dir / (stem + ".json")).string());
    out << run_result_to_json(r).dump(2) << '\n';
  }
  std::ofstream csv(dir / (stem + ".csv"));
  if (!csv) throw IoError("cannot write " + (dir / (stem + ".csv")).string());
  csv << "after_task,eval_task,accuracy\n" << std::setprecision(17);
  for (std::size_t j = 0; j < r.acc_matrix.tasks(); ++j)
    for (std::size_t k = 0; k <= j; ++k)
      csv << j + 1 << ',' << k + 1 << ',' << r.acc_matrix.a[j][k] << '\n';
}

}  // namespace afec
