#pragma once

#include <cstddef>
#include <cstdint>

#include "mixerflow/substrate/random.hpp"
#include "mixerflow/substrate/tensor.hpp"

namespace mixerflow {

/// Isotropic standard normal over R^D.
class StandardNormal {
 public:
  explicit StandardNormal(std::size_t dim);

  std::size_t dim() const { return dim_; }
  /// Per-sample log density of z with shape [batch, D] (or any shape with D elements per sample).
  Tensor log_prob(const Tensor& z) const;
  Tensor sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t dim_;
};

}  // namespace mixerflow
