#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mixerflow/flow/bijection.hpp"

namespace mixerflow {

/// Central-difference Jacobian of a per-sample map at one point `x` (shape [1, ...]).
/// Returns a row-major D_out x D_in matrix. All 2·D_in perturbations run as one batch.
std::vector<double> finite_difference_jacobian(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                                               double step = 1e-5);

struct VerifyOptions {
  std::size_t probes = 20;
  double round_trip_tolerance = 1e-8;
  double log_det_tolerance = 1e-6;
  double step = 1e-5;
  double probe_scale = 1.0;  // probes are N(0, probe_scale²) per element
  std::uint64_t seed = 0;
};

struct VerifyReport {
  std::size_t probes = 0;
  double max_round_trip_error = 0.0;
  double max_log_det_error = 0.0;
  bool passed = false;
  std::string failure;  // set when a probe raised instead of returning
};

/// Round-trip and log-det checks of `b` on seeded probes of shape [1, sample_shape...].
/// Runs in evaluation mode and restores the previous mode afterwards.
VerifyReport verify_bijection(Bijection& b, const Shape& sample_shape, const VerifyOptions& options = {});

}  // namespace mixerflow
