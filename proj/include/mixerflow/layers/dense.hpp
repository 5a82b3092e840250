#pragma once

#include <cstddef>

#include "mixerflow/substrate/module.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

enum class DenseInit { uniform, zero };

/// y = x (W ⊙ M)^T + b. The optional mask M is fixed; weights start U(±1/√in) or at zero.
class Dense : public Module {
 public:
  Dense(std::string path, std::size_t in, std::size_t out, Rng& rng, DenseInit init = DenseInit::uniform);

  Tensor operator()(const Tensor& x) const;

  /// Fixes a row-major [out, in] 0/1 mask multiplied into the weight on every call.
  void set_mask(std::vector<double> mask);
  const Tensor& mask() const { return mask_; }

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Parameter* weight_;
  Parameter* bias_;
  Tensor mask_;
};

/// Per-feature normalization of [n, f] with learned affine and running statistics.
/// Training mode normalizes with the batch statistics; evaluation mode with the running ones.
class FeatureNorm : public Module {
 public:
  FeatureNorm(std::string path, std::size_t features, double eps = 1e-5, double momentum = 0.1);

  /// `update_statistics` folds the batch statistics into the running averages (training mode only).
  Tensor operator()(const Tensor& x, bool update_statistics) const;

 private:
  std::size_t features_;
  double eps_;
  double momentum_;
  Parameter* gamma_;
  Parameter* beta_;
  Buffer* running_mean_;
  Buffer* running_var_;
};

}  // namespace mixerflow
