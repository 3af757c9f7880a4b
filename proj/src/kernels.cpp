#include "afec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <vector>

#include "afec/errors.hpp"
#include "detail.hpp"

namespace afec::kernels {

namespace {

constexpr std::size_t kMinChunk = 16;
constexpr std::size_t kMaxChunks = 32;

// Layers along one head path, with the offset of each layer's gradient in a
// compact local buffer: body coordinates keep their global offsets and the
// head is packed right after the body.
struct PathLayout {
  std::vector<DenseLayer> layers;
  std::vector<std::size_t> local_offset;
  std::size_t body_end = 0;
  std::size_t head_offset = 0;
  std::size_t local_size = 0;

  PathLayout(const Network& net, int head) : layers(net.path(head)) {
    body_end = net.body_param_count();
    head_offset = layers.back().offset;
    for (const auto& l : layers) local_offset.push_back(l.offset);
    local_offset.back() = body_end;
    local_size = body_end + layers.back().param_count();
  }

  std::size_t global(std::size_t local) const {
    return local < body_end ? local : head_offset + (local - body_end);
  }
};

struct Workspace {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l + 1] = output of layer l
  std::vector<std::vector<double>> pre;
  std::vector<double> delta;
  std::vector<double> delta_prev;
  std::vector<double> grad;

  explicit Workspace(const PathLayout& p) {
    acts.resize(p.layers.size() + 1);
    pre.resize(p.layers.size());
    std::size_t widest = p.layers.front().in_dim;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      acts[l + 1].resize(p.layers[l].out_dim);
      pre[l].resize(p.layers[l].out_dim);
      widest = std::max(widest, p.layers[l].out_dim);
    }
    delta.resize(widest);
    delta_prev.resize(widest);
    grad.resize(p.local_size);
  }
};

void forward_sample(std::span<const double> params, const PathLayout& p, std::span<const double> x,
                    Workspace& ws) {
  ws.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const DenseLayer& layer = p.layers[l];
    const double* w = params.data() + layer.weight_offset();
    const double* b = params.data() + layer.bias_offset();
    const std::vector<double>& in = ws.acts[l];
    std::vector<double>& z = ws.pre[l];
    std::vector<double>& out = ws.acts[l + 1];
    bool finite = true;
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double* wr = w + o * layer.in_dim;
      double s = b[o];
      for (std::size_t i = 0; i < layer.in_dim; ++i) s += wr[i] * in[i];
      z[o] = s;
      out[o] = detail::activate(layer.activation, s);
      finite = finite && std::isfinite(out[o]);
    }
    if (!finite) throw NumericError("non-finite activation in layer " + std::to_string(l));
  }
}

// Writes scale * d loss / d theta for one sample into ws.grad (local layout).
// ws.delta must hold d loss / d output on entry.
void backward_sample(std::span<const double> params, const PathLayout& p, double scale,
                     Workspace& ws) {
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const DenseLayer& layer = p.layers[k];
    const std::vector<double>& in = ws.acts[k];
    double* gw = ws.grad.data() + p.local_offset[k];
    double* gb = gw + layer.in_dim * layer.out_dim;
    // Fold the activation derivative into delta first.
    for (std::size_t o = 0; o < layer.out_dim; ++o)
      ws.delta[o] *= detail::activate_grad(layer.activation, ws.pre[k][o], ws.acts[k + 1][o]);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double d = scale * ws.delta[o];
      double* gr = gw + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) gr[i] = d * in[i];
      gb[o] = d;
    }
    if (k == 0) break;
    const double* w = params.data() + layer.weight_offset();
    std::fill_n(ws.delta_prev.begin(), layer.in_dim, 0.0);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double d = ws.delta[o];
      const double* wr = w + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) ws.delta_prev[i] += wr[i] * d;
    }
    std::swap(ws.delta, ws.delta_prev);
  }
}

inline double fold(Reduce r, double g) {
  switch (r) {
    case Reduce::square:
      return g * g;
    case Reduce::abs:
      return std::abs(g);
    case Reduce::sum:
      break;
  }
  return g;
}

struct ChunkRange {
  std::size_t begin;
  std::size_t end;
};

ChunkRange chunk_range(std::size_t n, std::size_t nc, std::size_t c) {
  return {c * n / nc, (c + 1) * n / nc};
}

}  // namespace

std::size_t chunk_count(std::size_t n) {
  if (n <= kMinChunk) return 1;
  return std::min(kMaxChunks, (n + kMinChunk - 1) / kMinChunk);
}

double accumulate(const Network& net, const BatchView& batch, LossKind kind, Reduce reduce,
                  double scale, std::span<double> out) {
  if (out.size() != net.param_count()) throw ShapeError("accumulate: output length mismatch");
  const PathLayout layout(net, batch.head);
  const std::size_t n = batch.size();
  const std::size_t nc = chunk_count(n);
  const auto params = net.params();

  std::vector<std::vector<double>> partial(nc);
  std::vector<double> losses(nc, 0.0);
  std::vector<std::exception_ptr> errors(nc);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(nc); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    try {
      Workspace ws(layout);
      std::vector<double>& acc = partial[c];
      acc.assign(layout.local_size, 0.0);
      const ChunkRange r = chunk_range(n, nc, c);
      for (std::size_t s = r.begin; s < r.end; ++s) {
        const std::size_t row = batch.row(s);
        forward_sample(params, layout, batch.inputs->row(row), ws);
        const std::vector<double>& y = ws.acts.back();
        const double loss = detail::loss_and_output_grad(
            y, batch, row, kind, std::span<double>(ws.delta.data(), y.size()));
        if (!std::isfinite(loss)) throw NumericError("non-finite loss at sample " + std::to_string(row));
        losses[c] += loss;
        backward_sample(params, layout, scale, ws);
        for (std::size_t i = 0; i < layout.local_size; ++i) acc[i] += fold(reduce, ws.grad[i]);
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::fill(out.begin(), out.end(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    total += losses[c];
    const std::vector<double>& acc = partial[c];
    for (std::size_t i = 0; i < layout.local_size; ++i) out[layout.global(i)] += acc[i];
  }
  return total;
}

Matrix forward_rows(const Network& net, const BatchView& batch) {
  const PathLayout layout(net, batch.head);
  const std::size_t n = batch.size();
  const std::size_t nc = chunk_count(n);
  Matrix out(n, layout.layers.back().out_dim);
  std::vector<std::exception_ptr> errors(nc);
  const auto params = net.params();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(nc); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    try {
      Workspace ws(layout);
      const ChunkRange r = chunk_range(n, nc, c);
      for (std::size_t s = r.begin; s < r.end; ++s) {
        forward_sample(params, layout, batch.inputs->row(batch.row(s)), ws);
        std::copy(ws.acts.back().begin(), ws.acts.back().end(), out.row(s).begin());
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------

namespace reference {

namespace {

struct NaiveLayer {
  LayerTensors t;
  Activation act;
  std::size_t offset;
};

std::vector<NaiveLayer> naive_path(const Network& net, int head) {
  const auto tensors = net.layer_tensors();
  const auto& body = net.body_layers();
  std::vector<NaiveLayer> out;
  for (std::size_t l = 0; l < body.size(); ++l)
    out.push_back({tensors[l], body[l].activation, body[l].offset});
  const auto& heads = net.spec().heads;
  for (std::size_t h = 0; h < heads.size(); ++h)
    if (heads[h].id == head)
      out.push_back({tensors[body.size() + h], Activation::identity, net.head_layers()[h].offset});
  if (out.size() == body.size()) throw ConfigError("network has no head " + std::to_string(head));
  return out;
}

std::vector<std::vector<double>> naive_forward(const std::vector<NaiveLayer>& path,
                                               std::span<const double> x,
                                               std::vector<std::vector<double>>& pre) {
  std::vector<std::vector<double>> acts{std::vector<double>(x.begin(), x.end())};
  pre.clear();
  for (std::size_t l = 0; l < path.size(); ++l) {
    const auto& L = path[l];
    std::vector<double> z(L.t.bias);
    std::vector<double> a(z.size());
    for (std::size_t o = 0; o < z.size(); ++o) {
      for (std::size_t i = 0; i < L.t.weights.cols; ++i) z[o] += L.t.weights(o, i) * acts[l][i];
      a[o] = detail::activate(L.act, z[o]);
      if (!std::isfinite(a[o]))
        throw NumericError("non-finite activation in layer " + std::to_string(l));
    }
    pre.push_back(std::move(z));
    acts.push_back(std::move(a));
  }
  return acts;
}

}  // namespace

double accumulate(const Network& net, const BatchView& batch, LossKind kind, Reduce reduce,
                  double scale, std::span<double> out) {
  if (out.size() != net.param_count()) throw ShapeError("accumulate: output length mismatch");
  const auto path = naive_path(net, batch.head);
  std::fill(out.begin(), out.end(), 0.0);
  double total = 0.0;
  std::vector<std::vector<double>> pre;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const std::size_t row = batch.row(s);
    const auto acts = naive_forward(path, batch.inputs->row(row), pre);
    std::vector<double> delta(acts.back().size());
    total += detail::loss_and_output_grad(acts.back(), batch, row, kind, delta);
    for (std::size_t k = path.size(); k-- > 0;) {
      const auto& L = path[k];
      for (std::size_t o = 0; o < delta.size(); ++o)
        delta[o] *= detail::activate_grad(L.act, pre[k][o], acts[k + 1][o]);
      const std::size_t in_dim = L.t.weights.cols;
      for (std::size_t o = 0; o < delta.size(); ++o) {
        for (std::size_t i = 0; i < in_dim; ++i)
          out[L.offset + o * in_dim + i] += fold(reduce, scale * delta[o] * acts[k][i]);
        out[L.offset + delta.size() * in_dim + o] += fold(reduce, scale * delta[o]);
      }
      std::vector<double> next(in_dim, 0.0);
      for (std::size_t i = 0; i < in_dim; ++i)
        for (std::size_t o = 0; o < delta.size(); ++o) next[i] += L.t.weights(o, i) * delta[o];
      delta = std::move(next);
    }
  }
  return total;
}

Matrix forward_rows(const Network& net, const BatchView& batch) {
  const auto path = naive_path(net, batch.head);
  Matrix out(batch.size(), path.back().t.bias.size());
  std::vector<std::vector<double>> pre;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto acts = naive_forward(path, batch.inputs->row(batch.row(s)), pre);
    std::copy(acts.back().begin(), acts.back().end(), out.row(s).begin());
  }
  return out;
}

}  // namespace reference

}  // namespace afec::kernels
