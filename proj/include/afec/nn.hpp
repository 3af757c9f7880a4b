#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace afec {

using ParamVector = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { relu, tanh, identity };
enum class LossKind { mse, cross_entropy, angular_mse };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind k);
Activation parse_activation(std::string_view s);
LossKind parse_loss_kind(std::string_view s);

struct HeadSpec {
  int id = 0;
  std::size_t dim = 0;

  bool operator==(const HeadSpec&) const = default;
};

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::relu;
  std::vector<HeadSpec> heads;

  bool operator==(const NetworkSpec&) const = default;
};

/// One dense layer's placement inside the flat parameter vector. Weights are
/// stored [out_dim x in_dim] row-major at `offset`, followed by the bias.
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::identity;
  std::size_t offset = 0;

  std::size_t weight_offset() const { return offset; }
  std::size_t bias_offset() const { return offset + in_dim * out_dim; }
  std::size_t param_count() const { return in_dim * out_dim + out_dim; }
  std::size_t end() const { return offset + param_count(); }

  bool operator==(const DenseLayer&) const = default;
};

struct LayerTensors {
  Matrix weights;
  std::vector<double> bias;

  bool operator==(const LayerTensors&) const = default;
};

/// Dense feed-forward body with one linear output head per task. All
/// trainable scalars live in a single flat vector; layers are views into it.
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t param_count() const { return params_.size(); }
  std::size_t body_param_count() const;
  std::size_t feature_dim() const;

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  ParamVector flatten() const { return params_; }
  void unflatten(std::span<const double> values);

  const std::vector<DenseLayer>& body_layers() const { return body_; }
  const std::vector<DenseLayer>& head_layers() const { return heads_; }
  bool has_head(int id) const;
  const DenseLayer& head(int id) const;

  /// Layers traversed when evaluating through `head_id`, input to output.
  std::vector<DenseLayer> path(int head_id) const;

  /// Appends a freshly initialised head. The init depends only on
  /// (seed, head id), so the same head id always starts from the same weights.
  void add_head(HeadSpec head);
  void reinit_head(int id);

  std::vector<LayerTensors> layer_tensors() const;
  void set_layer_tensors(const std::vector<LayerTensors>& tensors);

  bool operator==(const Network&) const = default;

 private:
  void init_layer(const DenseLayer& layer, std::uint64_t stream);

  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> body_;
  std::vector<DenseLayer> heads_;
  ParamVector params_;
};

/// Non-owning view over a set of samples. `rows` selects a subset of the
/// underlying matrices; an empty `rows` means every row.
struct BatchView {
  const Matrix* inputs = nullptr;
  const Matrix* targets = nullptr;
  std::span<const int> labels;
  std::span<const std::size_t> rows;
  int head = 0;

  std::size_t size() const { return rows.empty() ? inputs->rows : rows.size(); }
  std::size_t row(std::size_t i) const { return rows.empty() ? i : rows[i]; }
};

struct Batch {
  Matrix inputs;
  Matrix targets;
  std::vector<int> labels;
  int head = 0;

  BatchView view() const { return {&inputs, &targets, labels, {}, head}; }
};

/// Throws ShapeError / InputError if the batch cannot be fed through `head`
/// with the given loss.
void validate_batch(const Network& net, const BatchView& batch, LossKind kind);

Matrix forward(const Network& net, const BatchView& batch);

/// Per-sample loss for a single output row.
double sample_loss(std::span<const double> output, const BatchView& batch, std::size_t row,
                   LossKind kind);

/// Mean loss over the batch, computed from forward outputs only.
double compute_loss(const Network& net, const BatchView& batch, LossKind kind);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean loss and its exact reverse-mode gradient.
LossGrad loss_and_grad(const Network& net, const BatchView& batch, LossKind kind);

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords_checked = 0;
};

/// Central-difference check of loss_and_grad on up to `max_coords` sampled
/// coordinates (all of them if the network is small enough).
GradCheck finite_diff_check(const Network& net, const BatchView& batch, LossKind kind, double eps,
                            std::size_t max_coords = 64, std::uint64_t seed = 0);

struct OptimizerSpec {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double lr = 1e-3;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimizerSpec&) const = default;
};

class Optimizer {
 public:
  Optimizer(OptimizerSpec spec, std::size_t n);

  void step(std::span<double> params, std::span<const double> grad);
  void reset();

  const OptimizerSpec& spec() const { return spec_; }
  std::size_t steps() const { return t_; }

 private:
  OptimizerSpec spec_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace afec
