#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mixerflow::linalg {

/// In-place LU factorization with partial pivoting of a row-major n x n matrix:
/// P A = L U with L unit lower-triangular, both packed into `lu`.
struct LuFactors {
  std::size_t n = 0;
  std::vector<double> lu;
  std::vector<std::size_t> pivots;  // row swapped with row i at step i
  int parity = 1;                   // sign of the row permutation
  bool singular = false;
};

LuFactors lu_factor(std::span<const double> matrix, std::size_t n);

struct Slogdet {
  double sign = 0.0;  // -1, 0 or +1
  double log_abs_det = 0.0;
};

Slogdet slogdet(std::span<const double> matrix, std::size_t n);
Slogdet slogdet(const LuFactors& factors);

/// Solves A x = b with the factors of A.
std::vector<double> lu_solve(const LuFactors& factors, std::span<const double> b);

/// Solves L x = b in place for unit lower-triangular L (row-major n x n, diagonal ignored).
void solve_unit_lower(std::span<const double> lower, std::size_t n, std::span<double> x);
/// Solves U x = b in place for upper-triangular U.
void solve_upper(std::span<const double> upper, std::size_t n, std::span<double> x);

}  // namespace mixerflow::linalg
