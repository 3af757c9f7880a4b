#pragma once

#include <span>

#include "afec/nn.hpp"
#include "afec/tasks.hpp"

namespace afec {

/// Diagonal Gaussian over parameters. A precision of 0 marks a coordinate the
/// distribution carries no information about.
struct DiagGaussian {
  ParamVector mean;
  ParamVector precision;

  std::size_t size() const { return mean.size(); }
  void validate() const;

  bool operator==(const DiagGaussian&) const = default;
};

struct WeightedProductResult {
  DiagGaussian mixture;
  double log_norm = 0.0;  // sum over coordinates of log Z_i
  double beta = 0.0;
};

/// Empirical diagonal Fisher on the task's training split: the mean over
/// samples of the squared per-sample gradient of the negative log-likelihood,
/// evaluated at the ground-truth labels. For the squared-error losses the
/// likelihood is a unit-variance Gaussian, i.e. nll = 0.5 * ||y - t||^2.
ParamVector estimate_diag_fisher(const Network& net, const TaskDataset& data);
ParamVector estimate_diag_fisher(const Network& net, const BatchView& batch, LossKind kind);

/// ((t - 1) * f_prev + f_new) / t, elementwise.
ParamVector fisher_running_average(std::span<const double> f_prev, std::span<const double> f_new,
                                   int t);

/// p1^(1 - beta) * p2^beta / Z, per coordinate. Both inputs need strictly
/// positive precisions.
WeightedProductResult gaussian_weighted_product(const DiagGaussian& g1, const DiagGaussian& g2,
                                                double beta);

/// Laplace anchor at the current parameters.
DiagGaussian snapshot_anchor(const Network& net, const TaskDataset& data);

}  // namespace afec
