#include "afec/posterior.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "afec/errors.hpp"
#include "afec/kernels.hpp"

namespace afec {

void DiagGaussian::validate() const {
  if (mean.size() != precision.size())
    throw ShapeError("DiagGaussian: mean and precision lengths differ");
  for (double p : precision)
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InputError("DiagGaussian: precision must be finite and non-negative");
}

namespace {

// Rows ordered by content, so the summation order (and hence every rounding)
// does not depend on how the dataset happens to be ordered.
std::vector<std::size_t> canonical_rows(const BatchView& batch) {
  std::vector<std::size_t> rows(batch.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = batch.row(i);
  const Matrix& x = *batch.inputs;
  const Matrix* t = batch.targets;
  const bool has_targets = t != nullptr && t->rows == x.rows && t->cols > 0;
  auto key_less = [](double a, double b) {
    return std::bit_cast<std::uint64_t>(a) < std::bit_cast<std::uint64_t>(b);
  };
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    for (std::size_t j = 0; j < x.cols; ++j)
      if (ra[j] != rb[j] || std::signbit(ra[j]) != std::signbit(rb[j])) return key_less(ra[j], rb[j]);
    if (has_targets) {
      const auto ta = t->row(a), tb = t->row(b);
      for (std::size_t j = 0; j < t->cols; ++j)
        if (ta[j] != tb[j]) return key_less(ta[j], tb[j]);
    }
    if (!batch.labels.empty() && batch.labels[a] != batch.labels[b])
      return batch.labels[a] < batch.labels[b];
    return false;
  });
  return rows;
}

}  // namespace

ParamVector estimate_diag_fisher(const Network& net, const BatchView& data, LossKind kind) {
  if (data.inputs == nullptr || data.size() == 0)
    throw InputError("estimate_diag_fisher: empty dataset");
  validate_batch(net, data, kind);
  const std::vector<std::size_t> rows = canonical_rows(data);
  BatchView batch = data;
  batch.rows = rows;
  // The training losses are sums of squares; the unit-variance Gaussian
  // negative log-likelihood is half of that.
  const double nll_scale = kind == LossKind::cross_entropy ? 1.0 : 0.5;
  ParamVector fisher(net.param_count(), 0.0);
  kernels::accumulate(net, batch, kind, kernels::Reduce::square, nll_scale, fisher);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& f : fisher) f *= inv_n;
  return fisher;
}

ParamVector estimate_diag_fisher(const Network& net, const TaskDataset& data) {
  if (data.train.size() == 0) throw InputError("estimate_diag_fisher: empty dataset");
  return estimate_diag_fisher(net, data.train_view(), data.loss_kind());
}

ParamVector fisher_running_average(std::span<const double> f_prev, std::span<const double> f_new,
                                   int t) {
  if (t < 1) throw InputError("fisher_running_average: t must be >= 1, got " + std::to_string(t));
  if (f_prev.size() != f_new.size()) throw ShapeError("fisher_running_average: length mismatch");
  // Incremental form of ((t - 1) f_prev + f_new) / t; it keeps equal inputs
  // exactly fixed.
  const double inv_t = 1.0 / static_cast<double>(t);
  ParamVector out(f_new.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = t == 1 ? f_new[i] : f_prev[i] + (f_new[i] - f_prev[i]) * inv_t;
  return out;
}

WeightedProductResult gaussian_weighted_product(const DiagGaussian& g1, const DiagGaussian& g2,
                                                double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw InputError("gaussian_weighted_product: beta must lie in [0, 1]");
  if (g1.size() != g2.size() || g1.mean.size() != g1.precision.size() ||
      g2.mean.size() != g2.precision.size())
    throw ShapeError("gaussian_weighted_product: length mismatch");
  for (std::size_t i = 0; i < g1.size(); ++i)
    if (!(g1.precision[i] > 0.0) || !(g2.precision[i] > 0.0) || !std::isfinite(g1.precision[i]) ||
        !std::isfinite(g2.precision[i]))
      throw InputError("gaussian_weighted_product: coordinate " + std::to_string(i) +
                       " needs finite positive precision");

  WeightedProductResult r;
  r.beta = beta;
  // Endpoints reproduce the corresponding input exactly.
  if (beta == 0.0) {
    r.mixture = g1;
    return r;
  }
  if (beta == 1.0) {
    r.mixture = g2;
    return r;
  }

  // Precision form of the closed-form product: 1/v^2 = (1-b)/s1^2 + b/s2^2.
  const std::size_t n = g1.size();
  r.mixture.mean.resize(n);
  r.mixture.precision.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = (1.0 - beta) * g1.precision[i];
    const double b = beta * g2.precision[i];
    const double prec = a + b;
    const double diff = g1.mean[i] - g2.mean[i];
    r.mixture.precision[i] = prec;
    r.mixture.mean[i] = (a * g1.mean[i] + b * g2.mean[i]) / prec;
    // (k - m^2) / (2 v^2), with k - m^2 expanded to avoid cancellation.
    const double spread = a * b * diff * diff / (2.0 * prec);
    const double log_ratio = 0.5 * ((1.0 - beta) * std::log(g1.precision[i]) +
                                    beta * std::log(g2.precision[i]) - std::log(prec));
    r.log_norm += log_ratio - spread;
  }
  return r;
}

DiagGaussian snapshot_anchor(const Network& net, const TaskDataset& data) {
  DiagGaussian g;
  g.precision = estimate_diag_fisher(net, data);
  g.mean = net.flatten();
  return g;
}

}  // namespace afec
