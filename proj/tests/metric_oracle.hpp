#pragma once

// Independent evaluators for the continual-learning metrics, written from the
// index formulas with 1-based task numbering.

#include <cstddef>
#include <vector>

#include "afec/metrics.hpp"
#include "afec/rng.hpp"

namespace oracle {

// A(i, j): accuracy on task j after training task i, 1 <= j <= i <= T.
inline double A(const afec::AccMatrix& m, std::size_t i, std::size_t j) { return m.a[i - 1][j - 1]; }

inline double acc(const afec::AccMatrix& m) {
  const std::size_t T = m.a.size();
  long double s = 0;
  for (std::size_t i = 1; i <= T; ++i) s += A(m, T, i);
  return static_cast<double>(s / T);
}

inline double bwt(const afec::AccMatrix& m) {
  const std::size_t T = m.a.size();
  long double s = 0;
  for (std::size_t i = 1; i <= T - 1; ++i) s += A(m, T, i) - A(m, i, i);
  return static_cast<double>(s / (T - 1));
}

inline double fwt(const afec::AccMatrix& m) {
  const std::size_t T = m.a.size();
  long double s = 0;
  for (std::size_t i = 2; i <= T; ++i) s += *m.pre[i - 1] - m.abar[i - 1];
  return static_cast<double>(s / (T - 1));
}

// Random lower-triangular matrix with every FWT input present. With `grid`
// set, entries are multiples of 1/64 in [0, 0.75] so that adding 0.25 and
// dividing by a power of two stay exact.
inline afec::AccMatrix random_matrix(std::size_t T, afec::CounterRng& rng, bool grid = false) {
  auto draw = [&] { return grid ? static_cast<double>(rng.index(49)) / 64.0 : rng.uniform(); };
  afec::AccMatrix m;
  for (std::size_t j = 0; j < T; ++j) {
    m.a.emplace_back();
    for (std::size_t k = 0; k <= j; ++k) m.a.back().push_back(draw());
    m.abar.push_back(draw());
    m.pre.push_back(j == 0 ? std::optional<double>{} : std::optional<double>{draw()});
  }
  return m;
}

}  // namespace oracle
