#include "afec/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "afec/errors.hpp"
#include "afec/kernels.hpp"
#include "afec/rng.hpp"
#include "detail.hpp"

namespace afec {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::mse:
      return "mse";
    case LossKind::cross_entropy:
      return "cross_entropy";
    case LossKind::angular_mse:
      return "angular_mse";
  }
  return "mse";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::mse;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "angular_mse") return LossKind::angular_mse;
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  if (spec_.input_dim == 0) throw ShapeError("network input_dim must be positive");
  std::size_t in = spec_.input_dim;
  std::size_t offset = 0;
  for (std::size_t width : spec_.hidden) {
    if (width == 0) throw ShapeError("hidden layer width must be positive");
    body_.push_back({in, width, spec_.activation, offset});
    offset = body_.back().end();
    in = width;
  }
  for (const HeadSpec& h : spec_.heads) {
    if (h.dim == 0) throw ShapeError("head " + std::to_string(h.id) + " has zero outputs");
    heads_.push_back({in, h.dim, Activation::identity, offset});
    offset = heads_.back().end();
  }
  for (std::size_t i = 0; i < spec_.heads.size(); ++i)
    for (std::size_t j = i + 1; j < spec_.heads.size(); ++j)
      if (spec_.heads[i].id == spec_.heads[j].id)
        throw ConfigError("duplicate head id " + std::to_string(spec_.heads[i].id));

  params_.assign(offset, 0.0);
  for (std::size_t l = 0; l < body_.size(); ++l) init_layer(body_[l], streams::kLayerInit + l);
  for (std::size_t h = 0; h < heads_.size(); ++h)
    init_layer(heads_[h], streams::kHeadInit + static_cast<std::uint64_t>(spec_.heads[h].id));
}

void Network::init_layer(const DenseLayer& layer, std::uint64_t stream) {
  CounterRng rng(derive_key(seed_, stream));
  const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
  for (std::size_t i = 0; i < layer.in_dim * layer.out_dim; ++i)
    params_[layer.weight_offset() + i] = rng.uniform(-limit, limit);
  std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layer.bias_offset()), layer.out_dim,
              0.0);
}

std::size_t Network::body_param_count() const { return body_.empty() ? 0 : body_.back().end(); }

std::size_t Network::feature_dim() const {
  return body_.empty() ? spec_.input_dim : body_.back().out_dim;
}

void Network::unflatten(std::span<const double> values) {
  if (values.size() != params_.size())
    throw ShapeError("unflatten: expected " + std::to_string(params_.size()) + " values, got " +
                     std::to_string(values.size()));
  std::copy(values.begin(), values.end(), params_.begin());
}

bool Network::has_head(int id) const {
  return std::any_of(spec_.heads.begin(), spec_.heads.end(),
                     [id](const HeadSpec& h) { return h.id == id; });
}

const DenseLayer& Network::head(int id) const {
  for (std::size_t h = 0; h < spec_.heads.size(); ++h)
    if (spec_.heads[h].id == id) return heads_[h];
  throw ConfigError("network has no head " + std::to_string(id));
}

std::vector<DenseLayer> Network::path(int head_id) const {
  std::vector<DenseLayer> p = body_;
  p.push_back(head(head_id));
  return p;
}

void Network::add_head(HeadSpec h) {
  if (has_head(h.id)) throw ConfigError("duplicate head id " + std::to_string(h.id));
  if (h.dim == 0) throw ShapeError("head " + std::to_string(h.id) + " has zero outputs");
  DenseLayer layer{feature_dim(), h.dim, Activation::identity, params_.size()};
  params_.resize(layer.end(), 0.0);
  spec_.heads.push_back(h);
  heads_.push_back(layer);
  init_layer(layer, streams::kHeadInit + static_cast<std::uint64_t>(h.id));
}

void Network::reinit_head(int id) {
  init_layer(head(id), streams::kHeadInit + static_cast<std::uint64_t>(id));
}

std::vector<LayerTensors> Network::layer_tensors() const {
  std::vector<LayerTensors> out;
  auto extract = [&](const DenseLayer& l) {
    LayerTensors t{Matrix(l.out_dim, l.in_dim), std::vector<double>(l.out_dim)};
    std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(l.weight_offset()),
                l.in_dim * l.out_dim, t.weights.data.begin());
    std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(l.bias_offset()), l.out_dim,
                t.bias.begin());
    out.push_back(std::move(t));
  };
  for (const auto& l : body_) extract(l);
  for (const auto& l : heads_) extract(l);
  return out;
}

void Network::set_layer_tensors(const std::vector<LayerTensors>& tensors) {
  if (tensors.size() != body_.size() + heads_.size())
    throw ShapeError("set_layer_tensors: layer count mismatch");
  std::size_t i = 0;
  auto store = [&](const DenseLayer& l) {
    const LayerTensors& t = tensors[i++];
    if (t.weights.rows != l.out_dim || t.weights.cols != l.in_dim || t.bias.size() != l.out_dim)
      throw ShapeError("set_layer_tensors: layer " + std::to_string(i - 1) + " shape mismatch");
    std::copy(t.weights.data.begin(), t.weights.data.end(),
              params_.begin() + static_cast<std::ptrdiff_t>(l.weight_offset()));
    std::copy(t.bias.begin(), t.bias.end(),
              params_.begin() + static_cast<std::ptrdiff_t>(l.bias_offset()));
  };
  for (const auto& l : body_) store(l);
  for (const auto& l : heads_) store(l);
}

// ---------------------------------------------------------------------------
// Batches and losses

void validate_batch(const Network& net, const BatchView& batch, LossKind kind) {
  if (batch.inputs == nullptr) throw ShapeError("batch has no inputs");
  if (batch.size() == 0) throw ShapeError("batch is empty");
  if (batch.inputs->cols != net.spec().input_dim)
    throw ShapeError("batch input dim " + std::to_string(batch.inputs->cols) +
                     " does not match network input dim " +
                     std::to_string(net.spec().input_dim));
  const DenseLayer& head = net.head(batch.head);
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (batch.row(i) >= batch.inputs->rows) throw ShapeError("batch row index out of range");

  if (kind == LossKind::cross_entropy) {
    if (batch.labels.size() < batch.inputs->rows)
      throw ShapeError("cross_entropy batch needs one label per input row");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int label = batch.labels[batch.row(i)];
      if (label < 0 || static_cast<std::size_t>(label) >= head.out_dim)
        throw InputError("label " + std::to_string(label) + " outside head " +
                         std::to_string(batch.head) + " range");
    }
    return;
  }
  if (batch.targets == nullptr || batch.targets->rows != batch.inputs->rows)
    throw ShapeError("regression batch needs one target row per input row");
  if (batch.targets->cols != head.out_dim)
    throw ShapeError("target arity " + std::to_string(batch.targets->cols) +
                     " does not match head output dim " + std::to_string(head.out_dim));
  if (kind == LossKind::angular_mse) {
    if (head.out_dim != 2) throw ShapeError("angular_mse requires a 2-output head");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto t = batch.targets->row(batch.row(i));
      if (std::abs(std::hypot(t[0], t[1]) - 1.0) > 1e-9)
        throw InputError("angular_mse targets must be unit vectors");
    }
  }
}

Matrix forward(const Network& net, const BatchView& batch) {
  if (batch.inputs == nullptr || batch.inputs->cols != net.spec().input_dim)
    throw ShapeError("forward: input dim does not match network");
  return kernels::forward_rows(net, batch);
}

double sample_loss(std::span<const double> output, const BatchView& batch, std::size_t row,
                   LossKind kind) {
  return detail::loss_and_output_grad(output, batch, row, kind, {});
}

double compute_loss(const Network& net, const BatchView& batch, LossKind kind) {
  validate_batch(net, batch, kind);
  const Matrix out = forward(net, batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    total += sample_loss(out.row(i), batch, batch.row(i), kind);
  return total / static_cast<double>(batch.size());
}

LossGrad loss_and_grad(const Network& net, const BatchView& batch, LossKind kind) {
  validate_batch(net, batch, kind);
  LossGrad r;
  r.grad.assign(net.param_count(), 0.0);
  const double total =
      kernels::accumulate(net, batch, kind, kernels::Reduce::sum, 1.0, r.grad);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  r.loss = total * inv_n;
  for (double& g : r.grad) g *= inv_n;
  return r;
}

GradCheck finite_diff_check(const Network& net, const BatchView& batch, LossKind kind, double eps,
                            std::size_t max_coords, std::uint64_t seed) {
  if (!(eps > 0.0)) throw InputError("finite_diff_check: eps must be positive");
  const LossGrad analytic = loss_and_grad(net, batch, kind);

  std::vector<std::size_t> coords(net.param_count());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > max_coords) {
    CounterRng rng(derive_key(seed, streams::kFiniteDiff));
    shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  Network probe = net;
  GradCheck check;
  for (std::size_t c : coords) {
    const double orig = probe.params()[c];
    probe.params()[c] = orig + eps;
    const double up = compute_loss(probe, batch, kind);
    probe.params()[c] = orig - eps;
    const double down = compute_loss(probe, batch, kind);
    probe.params()[c] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.grad[c];
    const double abs_err = std::abs(a - numeric);
    check.max_abs_error = std::max(check.max_abs_error, abs_err);
    check.max_rel_error =
        std::max(check.max_rel_error, abs_err / std::max(1e-12, std::abs(a) + std::abs(numeric)));
  }
  check.coords_checked = coords.size();
  return check;
}

// ---------------------------------------------------------------------------
// Optimizers

Optimizer::Optimizer(OptimizerSpec spec, std::size_t n) : spec_(spec), m_(n, 0.0), v_(n, 0.0) {
  if (!(spec_.lr > 0.0)) throw ConfigError("optimizer lr must be positive");
}

void Optimizer::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  t_ = 0;
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || params.size() != m_.size())
    throw ShapeError("optimizer step: length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("optimizer step: non-finite gradient");
  ++t_;
  if (spec_.kind == OptimizerSpec::Kind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (spec_.momentum != 0.0) {
        m_[i] = spec_.momentum * m_[i] + grad[i];
        params[i] -= spec_.lr * m_[i];
      } else {
        params[i] -= spec_.lr * grad[i];
      }
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = spec_.beta1 * m_[i] + (1.0 - spec_.beta1) * grad[i];
    v_[i] = spec_.beta2 * v_[i] + (1.0 - spec_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= spec_.lr * m_hat / (std::sqrt(v_hat) + spec_.eps);
  }
}

}  // namespace afec
