#pragma once

#include <cstddef>
#include <vector>

#include "mixerflow/substrate/module.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

enum class LinearMode { lu, rlu };

/// Invertible k x k matrix W = P L U. L is unit lower-triangular, U upper-triangular with
/// diagonal sign·exp(log_diag); P is the identity (lu) or the order reversal (rlu).
/// Starts at L = U = I.
class LuMatrix : public Module {
 public:
  LuMatrix(std::string path, std::size_t size, LinearMode mode);

  std::size_t size() const { return size_; }
  LinearMode mode() const { return mode_; }

  /// The realized matrix as a differentiable [k, k] tensor.
  Tensor weight() const;
  /// Scalar log|det W| = Σ log_diag, differentiable.
  Tensor log_abs_det() const;
  /// Throws ConditioningError when a diagonal magnitude of U has fallen below 1e-12.
  void check_conditioning() const;

  /// Solves W x = y for every row of `rows` (row-major, count x k), in place.
  void solve_rows(std::span<double> rows, std::size_t count) const;

  /// Random well-conditioned factors for tests and probes.
  void randomize(Rng& rng, double scale = 0.3);
  /// Directly sets the factors: strict parts are row-major k x k matrices (other entries ignored).
  void set_factors(std::span<const double> lower, std::span<const double> upper, std::span<const double> log_diag,
                   std::span<const double> sign);

 private:
  std::size_t size_;
  LinearMode mode_;
  std::vector<std::size_t> lower_index_;
  std::vector<std::size_t> upper_index_;  // strict upper then diagonal
  std::vector<std::size_t> reverse_rows_;
  Tensor identity_;
  Tensor zeros_;
  Parameter* lower_;
  Parameter* upper_;
  Parameter* log_diag_;
  Buffer* sign_;
};

}  // namespace mixerflow
