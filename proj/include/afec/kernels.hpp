#pragma once

// Per-sample gradient reductions. These are the hot loops of training and of
// Fisher/MAS estimation. The OpenMP version splits samples into a fixed number
// of contiguous chunks (independent of the thread count) and sums chunk
// partials in order, so results are bitwise reproducible for any OMP_NUM_THREADS.
// The `reference` namespace holds a deliberately naive serial version used as a
// test oracle and benchmark baseline.

#include <cstddef>
#include <span>

#include "afec/nn.hpp"

namespace afec::kernels {

/// How each per-sample gradient is folded into the output.
enum class Reduce { sum, square, abs };

/// out[i] = sum over samples s of reduce(scale * d loss_s / d theta_i).
/// Coordinates off the batch's head path are left at zero. Returns the sum of
/// the (unscaled) per-sample losses. `out` must have param_count entries.
double accumulate(const Network& net, const BatchView& batch, LossKind kind, Reduce reduce,
                  double scale, std::span<double> out);

/// Forward pass over every row of the batch; rows are processed in parallel.
Matrix forward_rows(const Network& net, const BatchView& batch);

/// Number of chunks the parallel kernel uses for `n` samples.
std::size_t chunk_count(std::size_t n);

namespace reference {

double accumulate(const Network& net, const BatchView& batch, LossKind kind, Reduce reduce,
                  double scale, std::span<double> out);

Matrix forward_rows(const Network& net, const BatchView& batch);

}  // namespace reference

}  // namespace afec::kernels
