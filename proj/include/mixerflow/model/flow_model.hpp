#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/flow/density.hpp"
#include "mixerflow/flow/distribution.hpp"
#include "mixerflow/layers/linear_block.hpp"
#include "mixerflow/model/config.hpp"
#include "mixerflow/substrate/gradcheck.hpp"

namespace mixerflow {

/// Conv1x1 → patchify → n_layers mixer layers (every shift_every-th wrapped in a shift
/// layer) → flatten, over [b, ch, h, w] images, with a standard normal base on R^D.
class FlowModel : public FlowChain {
 public:
  explicit FlowModel(const MixerFlowConfig& config);

  const MixerFlowConfig& config() const { return config_; }
  const StandardNormal& base() const { return base_; }
  std::size_t dims() const { return base_.dim(); }
  Conv1x1& input_conv() { return *conv_; }

  /// Runs the first batch through every uninitialized ActNorm, which sets itself from it.
  void initialize(const Tensor& batch);
  /// Puts every ActNorm at scale 1, bias 0 and marks it initialized.
  void force_actnorm_identity();
  /// FNV-1a hash over all parameter values, in registration order.
  std::uint64_t checksum();

  DensityResult log_likelihood(const Tensor& x);
  Tensor sample(std::size_t n, std::uint64_t seed);

 private:
  MixerFlowConfig config_;
  StandardNormal base_;
  Conv1x1* conv_;
};

std::unique_ptr<FlowModel> build_model(const MixerFlowConfig& config);

/// Gradient check of the mean NLL over `batch`; the model must already be initialized.
GradientCheckReport check_model_gradients(FlowModel& model, const Tensor& batch, const GradientCheckOptions& options);

}  // namespace mixerflow
