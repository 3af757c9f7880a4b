#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "afec/nn.hpp"
#include "afec/rng.hpp"

namespace testing {

using namespace afec;

// Linear model y = w x with a single input, single output and zero bias.
inline Network scalar_linear(double w) {
  Network net(NetworkSpec{1, {}, Activation::identity, {{0, 1}}}, 0);
  net.params()[0] = w;
  net.params()[1] = 0.0;
  return net;
}

inline Batch scalar_batch(std::vector<double> xs, std::vector<double> ts) {
  Batch b;
  b.inputs = Matrix(xs.size(), 1);
  b.targets = Matrix(ts.size(), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    b.inputs(i, 0) = xs[i];
    b.targets(i, 0) = ts[i];
  }
  b.labels.assign(xs.size(), 0);
  return b;
}

// Random inputs plus targets suited to `kind` (unit 2-vectors for angular,
// class labels for cross entropy).
inline Batch random_batch(std::size_t n, std::size_t in_dim, std::size_t out_dim, LossKind kind,
                          std::uint64_t seed, int head = 0) {
  CounterRng rng(seed);
  Batch b;
  b.head = head;
  b.inputs = Matrix(n, in_dim);
  for (double& x : b.inputs.data) x = rng.normal();
  b.labels.resize(n);
  for (auto& l : b.labels) l = static_cast<int>(rng.index(out_dim));
  if (kind == LossKind::cross_entropy) return b;
  b.targets = Matrix(n, out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == LossKind::angular_mse) {
      const double phi = rng.uniform(0.0, 6.283185307179586);
      b.targets(i, 0) = std::cos(phi);
      b.targets(i, 1) = std::sin(phi);
    } else {
      for (std::size_t j = 0; j < out_dim; ++j) b.targets(i, j) = rng.normal();
    }
  }
  return b;
}

inline NetworkSpec two_layer(std::size_t in, std::size_t hidden, std::size_t out, Activation act,
                             std::vector<HeadSpec> heads = {}) {
  if (heads.empty()) heads = {{0, out}};
  return NetworkSpec{in, {hidden}, act, heads};  // hidden layer + head
}

}  // namespace testing
