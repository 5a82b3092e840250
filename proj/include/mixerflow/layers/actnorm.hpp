#pragma once

#include "mixerflow/flow/bijection.hpp"

namespace mixerflow {

/// While alive on this thread, uninitialized ActNorm layers initialize themselves from the
/// batch they see instead of failing.
class DataInitScope {
 public:
  DataInitScope();
  ~DataInitScope();
  DataInitScope(const DataInitScope&) = delete;
  DataInitScope& operator=(const DataInitScope&) = delete;

  static bool active();

 private:
  bool previous_;
};

/// y = exp(log_scale) ⊙ x + bias with one scale and bias per element of a sample.
class ActNorm : public Bijection {
 public:
  /// `min_std` floors the standard deviation used by data initialization, so elements that
  /// happen to be near-constant in the first batch do not get enormous scales.
  ActNorm(std::string path, Shape sample_shape, double min_std = 0.0);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;
  bool initialized() const override;

  /// Marks the layer initialized at scale 1, bias 0.
  void set_identity();
  /// Sets scale and bias from the per-element statistics of `x` (biased variance):
  /// s = 1 / (max(std, min_std) + 1e-6), b = −mean·s.
  void initialize_from(const Tensor& x);

  Parameter& log_scale() { return *log_scale_; }
  Parameter& bias() { return *bias_; }

 private:
  void check_ready() const;

  Shape sample_shape_;
  double min_std_;
  Parameter* log_scale_;
  Parameter* bias_;
  Buffer* initialized_;
};

}  // namespace mixerflow
