#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "mixerflow/substrate/tensor.hpp"

namespace mixerflow {

struct GradientCheckOptions {
  double step = 1e-5;        // central-difference half width, must lie in [1e-6, 1e-4]
  double tolerance = 1e-4;   // on the relative error
  std::size_t max_elements = 0;  // 0 checks every element; otherwise a seeded subsample of this size
  std::uint64_t seed = 0;
  /// Relative error is |a - n| / max(|a|, |n|, floor_used) with
  /// floor_used = max(floor, noise_factor · ε · max(1, |loss|) / step). The second term scales
  /// with the rounding error of the difference quotient, so exactly-zero gradients are judged
  /// against what the numeric side can resolve rather than against zero.
  double floor = 1e-6;
  double noise_factor = 1e5;
};

struct GradientCheckReport {
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double floor_used = 0.0;
  bool passed = false;
};

/// Compares backward() gradients of `loss` against (f(θ+h) − f(θ−h)) / 2h for the given parameters.
/// `loss` must rebuild the graph on every call.
GradientCheckReport check_gradients(std::span<Parameter* const> parameters, const std::function<Tensor()>& loss,
                                    const GradientCheckOptions& options = {});

}  // namespace mixerflow
