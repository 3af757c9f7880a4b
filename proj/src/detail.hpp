#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "afec/nn.hpp"

namespace afec::detail {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::tanh:
      return std::tanh(z);
    case Activation::identity:
      break;
  }
  return z;
}

// Derivative expressed through the pre-activation z and output y.
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::identity:
      break;
  }
  return 1.0;
}

/// Per-sample loss and d loss / d output. `dy` may be empty to skip the gradient.
inline double loss_and_output_grad(std::span<const double> y, const BatchView& batch,
                                   std::size_t row, LossKind kind, std::span<double> dy) {
  if (kind == LossKind::cross_entropy) {
    const int label = batch.labels[row];
    const double mx = *std::max_element(y.begin(), y.end());
    double denom = 0.0;
    for (double v : y) denom += std::exp(v - mx);
    const double log_z = mx + std::log(denom);
    if (!dy.empty()) {
      for (std::size_t j = 0; j < y.size(); ++j) dy[j] = std::exp(y[j] - log_z);
      dy[static_cast<std::size_t>(label)] -= 1.0;
    }
    return log_z - y[static_cast<std::size_t>(label)];
  }
  const auto t = batch.targets->row(row);
  double loss = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double r = y[j] - t[j];
    loss += r * r;
    if (!dy.empty()) dy[j] = 2.0 * r;
  }
  return loss;
}

}  // namespace afec::detail
