#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace afec {

/// Accuracy bookkeeping for a task sequence (tasks 0-indexed here).
///   a[j][k]  accuracy on task k after training task j, k <= j
///   abar[k]  accuracy on task k at random initialisation
///   pre[k]   accuracy on task k right before it is trained (the A_{k-1,k}
///            entry used by forward transfer); empty for k = 0
struct AccMatrix {
  std::vector<std::vector<double>> a;
  std::vector<double> abar;
  std::vector<std::optional<double>> pre;

  std::size_t tasks() const { return a.size(); }
  void validate() const;

  bool operator==(const AccMatrix&) const = default;
};

/// Mean of the final row.
double acc(const AccMatrix& m);

/// Mean over i < T of (A_{T,i} - A_{i,i}); needs T >= 2.
double bwt(const AccMatrix& m);

/// Mean over i >= 2 of (A_{i-1,i} - abar_i); needs T >= 2 and every pre entry.
double fwt(const AccMatrix& m);

/// Mean of row j (the averaged accuracy after j + 1 tasks).
double row_mean(const AccMatrix& m, std::size_t j);

}  // namespace afec
