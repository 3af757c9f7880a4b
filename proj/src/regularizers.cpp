#include "afec/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "afec/errors.hpp"
#include "afec/kernels.hpp"
#include "afec/rng.hpp"

namespace afec {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::finetune:
      return "finetune";
    case Method::ewc:
      return "ewc";
    case Method::afec:
      return "afec";
    case Method::mas:
      return "mas";
    case Method::si:
      return "si";
    case Method::rwalk:
      return "rwalk";
    case Method::mas_afec:
      return "mas_afec";
    case Method::si_afec:
      return "si_afec";
    case Method::rwalk_afec:
      return "rwalk_afec";
  }
  return "finetune";
}

std::string_view to_string(ImportanceMethod m) {
  switch (m) {
    case ImportanceMethod::mas:
      return "mas";
    case ImportanceMethod::si:
      return "si";
    case ImportanceMethod::rwalk:
      return "rwalk";
  }
  return "mas";
}

std::string_view to_string(ExpansionInit e) {
  return e == ExpansionInit::copy_main ? "copy_main" : "fresh_random";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::finetune, Method::ewc, Method::afec, Method::mas, Method::si,
                   Method::rwalk, Method::mas_afec, Method::si_afec, Method::rwalk_afec})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

ImportanceMethod parse_importance_method(std::string_view s) {
  for (ImportanceMethod m : {ImportanceMethod::mas, ImportanceMethod::si, ImportanceMethod::rwalk})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown importance method '" + std::string(s) + "'");
}

ExpansionInit parse_expansion_init(std::string_view s) {
  if (s == "copy_main") return ExpansionInit::copy_main;
  if (s == "fresh_random") return ExpansionInit::fresh_random;
  throw ConfigError("unknown expansion init '" + std::string(s) + "'");
}

bool uses_expansion(Method m) {
  return m == Method::afec || m == Method::mas_afec || m == Method::si_afec ||
         m == Method::rwalk_afec;
}

std::optional<ImportanceMethod> importance_method(Method m) {
  switch (m) {
    case Method::mas:
    case Method::mas_afec:
      return ImportanceMethod::mas;
    case Method::si:
    case Method::si_afec:
      return ImportanceMethod::si;
    case Method::rwalk:
    case Method::rwalk_afec:
      return ImportanceMethod::rwalk;
    default:
      return std::nullopt;
  }
}

// ---------------------------------------------------------------------------

RegState RegState::initial(std::span<const double> params) {
  const std::size_t n = params.size();
  RegState s;
  s.anchor.mean.assign(params.begin(), params.end());
  s.anchor.precision.assign(n, 0.0);
  s.importance.assign(n, 0.0);
  s.path_accum.assign(n, 0.0);
  s.prev_params.assign(params.begin(), params.end());
  s.running_fisher.assign(n, 0.0);
  return s;
}

void RegState::validate() const {
  anchor.validate();
  const std::size_t n = anchor.size();
  if (importance.size() != n || path_accum.size() != n || prev_params.size() != n ||
      running_fisher.size() != n)
    throw ShapeError("RegState: vector lengths differ");
  if (task_count < 0) throw InputError("RegState: negative task_count");
  for (double x : importance)
    if (!(x >= 0.0)) throw InputError("RegState: negative importance");
}

// ---------------------------------------------------------------------------

double add_quadratic_penalty(std::span<const double> params, std::span<const double> center,
                             std::span<const double> weight, double lambda,
                             std::span<double> grad) {
  if (params.size() != center.size() || params.size() != weight.size() ||
      params.size() != grad.size())
    throw ShapeError("quadratic penalty: length mismatch");
  if (!(lambda >= 0.0)) throw InputError("quadratic penalty: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  double value = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (weight[i] == 0.0) continue;
    const double d = params[i] - center[i];
    value += weight[i] * d * d;
    grad[i] += lambda * weight[i] * d;
  }
  return 0.5 * lambda * value;
}

PenaltyValue quadratic_penalty(std::span<const double> params, const DiagGaussian& anchor,
                               double lambda) {
  PenaltyValue p;
  p.grad.assign(params.size(), 0.0);
  p.value = add_quadratic_penalty(params, anchor.mean, anchor.precision, lambda, p.grad);
  return p;
}

double add_anchor_penalties(std::span<const double> params, const RegState& state,
                            std::span<const double> old_weight, const DiagGaussian* expanded,
                            double lambda, double lambda_e, std::span<double> grad) {
  double value = add_quadratic_penalty(params, state.anchor.mean, old_weight, lambda, grad);
  if (expanded != nullptr)
    value += add_quadratic_penalty(params, expanded->mean, expanded->precision, lambda_e, grad);
  else if (lambda_e != 0.0)
    throw InputError("lambda_e > 0 needs an expanded anchor");
  return value;
}

LossGrad afec_total_loss(const Network& net, const BatchView& batch, LossKind kind,
                         const RegState& state, const DiagGaussian* expanded,
                         const AfecConfig& cfg) {
  LossGrad lg = loss_and_grad(net, batch, kind);
  lg.loss += add_anchor_penalties(net.params(), state, state.anchor.precision, expanded,
                                  cfg.lambda, cfg.lambda_e, lg.grad);
  return lg;
}

LossGrad reg_with_afec_loss(const Network& net, const BatchView& batch, LossKind kind,
                            const RegState& state, const DiagGaussian* expanded, double lambda,
                            double lambda_e, ImportanceMethod) {
  LossGrad lg = loss_and_grad(net, batch, kind);
  lg.loss += add_anchor_penalties(net.params(), state, state.importance, expanded, lambda,
                                  lambda_e, lg.grad);
  return lg;
}

DiagGaussian train_expanded(const Network& net, const TaskDataset& task, const AfecConfig& cfg,
                            const TrainSpec& train, std::uint64_t shuffle_key) {
  Network expanded = cfg.expansion_init == ExpansionInit::copy_main
                         ? net
                         : Network(net.spec(), derive_key(net.seed(), streams::kExpansion));
  TrainSpec spec = train;
  spec.epochs = cfg.expansion_epochs;
  if (spec.epochs > 0) train_on_task(expanded, task, spec, shuffle_key);
  return snapshot_anchor(expanded, task);
}

// ---------------------------------------------------------------------------

namespace {

void check_len(const RegState& s, std::size_t n) {
  if (s.importance.size() != n) throw ShapeError("importance_update: length mismatch");
}

}  // namespace

void importance_update(ImportanceMethod method, RegState& state, const StepInfo& info,
                       const ImportanceConfig& cfg) {
  if (const auto* step = std::get_if<PathStep>(&info)) {
    if (method == ImportanceMethod::mas) return;
    check_len(state, step->grad.size());
    if (step->delta.size() != step->grad.size()) throw ShapeError("PathStep: length mismatch");
    for (std::size_t i = 0; i < step->grad.size(); ++i) {
      const double g = step->grad[i];
      const double d = step->delta[i];
      if (method == ImportanceMethod::si) {
        state.path_accum[i] -= g * d;
      } else {
        state.running_fisher[i] =
            cfg.rwalk_decay * state.running_fisher[i] + (1.0 - cfg.rwalk_decay) * g * g;
        state.path_accum[i] -= g * d / (0.5 * state.running_fisher[i] * d * d + cfg.si_damping);
      }
    }
    return;
  }

  if (const auto* mas = std::get_if<MasBatch>(&info)) {
    if (method != ImportanceMethod::mas) return;
    const Network& net = *mas->net;
    check_len(state, net.param_count());
    const std::size_t n = mas->batch.size();
    if (n == 0) throw InputError("MAS update needs at least one sample");
    // d ||f(x)||^2 / d theta is the squared-error gradient against a zero target.
    Matrix zeros(mas->batch.inputs->rows, net.head(mas->batch.head).out_dim, 0.0);
    BatchView view = mas->batch;
    view.targets = &zeros;
    ParamVector sens(net.param_count(), 0.0);
    kernels::accumulate(net, view, LossKind::mse, kernels::Reduce::abs, 1.0, sens);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < sens.size(); ++i) state.importance[i] += sens[i] * inv_n;
    return;
  }

  const auto& boundary = std::get<TaskBoundary>(info);
  check_len(state, boundary.params.size());
  for (std::size_t i = 0; i < boundary.params.size(); ++i) {
    double increment = 0.0;
    if (method == ImportanceMethod::si) {
      const double moved = boundary.params[i] - state.prev_params[i];
      increment = state.path_accum[i] / (moved * moved + cfg.si_damping);
    } else if (method == ImportanceMethod::rwalk) {
      increment = state.running_fisher[i] + std::max(0.0, state.path_accum[i]);
    }
    state.importance[i] += std::max(0.0, increment);
    state.path_accum[i] = 0.0;
    state.running_fisher[i] = 0.0;
    state.prev_params[i] = boundary.params[i];
  }
}

}  // namespace afec
