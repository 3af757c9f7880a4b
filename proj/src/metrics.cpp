#include "afec/metrics.hpp"

#include <string>

#include "afec/errors.hpp"

namespace afec {

void AccMatrix::validate() const {
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j].size() != j + 1)
      throw MetricError("accuracy row " + std::to_string(j + 1) + " must have " +
                        std::to_string(j + 1) + " entries");
    for (double v : a[j])
      if (!(v >= 0.0 && v <= 1.0)) throw MetricError("accuracy outside [0, 1]");
  }
  // A run in progress already knows the baseline of tasks it has not reached.
  if (!abar.empty() && abar.size() < a.size())
    throw MetricError("abar is shorter than the task count");
}

double row_mean(const AccMatrix& m, std::size_t j) {
  if (j >= m.tasks()) throw MetricError("row index out of range");
  double s = 0.0;
  for (double v : m.a[j]) s += v;
  return s / static_cast<double>(m.a[j].size());
}

double acc(const AccMatrix& m) {
  if (m.tasks() == 0) throw MetricError("ACC needs at least one task");
  return row_mean(m, m.tasks() - 1);
}

double bwt(const AccMatrix& m) {
  const std::size_t T = m.tasks();
  if (T < 2) throw MetricError("BWT is undefined for fewer than 2 tasks");
  const auto& last = m.a[T - 1];
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < T; ++i) s += last[i] - m.a[i][i];
  return s / static_cast<double>(T - 1);
}

double fwt(const AccMatrix& m) {
  const std::size_t T = m.tasks();
  if (T < 2) throw MetricError("FWT is undefined for fewer than 2 tasks");
  if (m.abar.size() != T) throw MetricError("FWT needs the random-init baseline for every task");
  if (m.pre.size() != T) throw MetricError("FWT needs pre-training evaluations");
  double s = 0.0;
  for (std::size_t i = 1; i < T; ++i) {
    if (!m.pre[i])
      throw MetricError("FWT needs the pre-training evaluation of task " + std::to_string(i + 1));
    s += *m.pre[i] - m.abar[i];
  }
  return s / static_cast<double>(T - 1);
}

}  // namespace afec
