#include "mixerflow/substrate/linalg.hpp"

#include <cmath>
#include <utility>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow::linalg {

LuFactors lu_factor(std::span<const double> matrix, std::size_t n) {
  if (matrix.size() != n * n) throw DimensionError("lu_factor: expected an n x n matrix");
  LuFactors f;
  f.n = n;
  f.lu.assign(matrix.begin(), matrix.end());
  f.pivots.resize(n);
  auto& a = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(a[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > best) {
        best = std::abs(a[i * n + k]);
        p = i;
      }
    }
    f.pivots[k] = p;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      f.parity = -f.parity;
    }
    const double pivot = a[k * n + k];
    if (pivot == 0.0) {
      f.singular = true;
      continue;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = a[i * n + k] / pivot;
      a[i * n + k] = m;
      if (m == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= m * a[k * n + j];
    }
  }
  return f;
}

Slogdet slogdet(const LuFactors& f) {
  if (f.singular) return {0.0, -INFINITY};
  Slogdet r{static_cast<double>(f.parity), 0.0};
  for (std::size_t i = 0; i < f.n; ++i) {
    const double d = f.lu[i * f.n + i];
    if (d < 0) r.sign = -r.sign;
    r.log_abs_det += std::log(std::abs(d));
  }
  return r;
}

Slogdet slogdet(std::span<const double> matrix, std::size_t n) { return slogdet(lu_factor(matrix, n)); }

std::vector<double> lu_solve(const LuFactors& f, std::span<const double> b) {
  if (f.singular) throw ConditioningError("lu_solve: singular matrix");
  if (b.size() != f.n) throw DimensionError("lu_solve: right-hand side length mismatch");
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t k = 0; k < f.n; ++k) {
    if (f.pivots[k] != k) std::swap(x[k], x[f.pivots[k]]);
  }
  solve_unit_lower(f.lu, f.n, x);
  solve_upper(f.lu, f.n, x);
  return x;
}

void solve_unit_lower(std::span<const double> lower, std::size_t n, std::span<double> x) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t j = 0; j < i; ++j) s -= lower[i * n + j] * x[j];
    x[i] = s;
  }
}

void solve_upper(std::span<const double> upper, std::size_t n, std::span<double> x) {
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= upper[i * n + j] * x[j];
    x[i] = s / upper[i * n + i];
  }
}

}  // namespace mixerflow::linalg
