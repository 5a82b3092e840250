#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mixerflow/substrate/tensor.hpp"

namespace mixerflow {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter in registration order.
class Adam {
 public:
  Adam(std::vector<Parameter*> parameters, AdamOptions options = {});

  /// Applies one update with the gradients currently stored on the parameters.
  void step(double lr);
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Parameter*>& parameters() const { return parameters_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

 private:
  std::vector<Parameter*> parameters_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

/// lr(t) = lr_min + (lr0 − lr_min)(1 + cos(π t / T)) / 2, clamped to lr_min for t ≥ T.
double cosine_lr(double lr0, std::uint64_t step, std::uint64_t total_steps, double lr_min = 0.0);

/// Global L2 norm of all gradients.
double global_grad_norm(std::span<Parameter* const> parameters);
/// Rescales gradients so their global norm is at most `max_norm`; returns the norm before clipping.
double clip_global_norm(std::span<Parameter* const> parameters, double max_norm);

}  // namespace mixerflow
