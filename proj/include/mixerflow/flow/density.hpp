#pragma once

#include <cstddef>
#include <cstdint>

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/flow/distribution.hpp"

namespace mixerflow {

/// Per-sample quantities, each of shape [batch].
struct DensityResult {
  Tensor log_prob;  // log p_X(x) in nats
  Tensor log_det;   // total log|det J| of the flow
  Tensor bpd;
};

/// log p_Z(f(x)) + log|det ∂f/∂x| per sample. Throws InitializationError when a data-dependent
/// layer has not seen its first batch yet.
DensityResult log_likelihood(Bijection& flow, const StandardNormal& base, const Tensor& x, int dequant_levels = 256);

/// bpd = −log p(y) / (D ln 2) + log2(levels), where y lives on [0,1)^D after dividing by `levels`.
Tensor bits_per_dim(const Tensor& log_prob_nats, std::ptrdiff_t dims, int dequant_levels = 256);
double bits_per_dim(double log_prob_nats, std::ptrdiff_t dims, int dequant_levels = 256);

/// n draws pushed through the inverse flow; reproducible for a fixed seed.
Tensor sample(Bijection& flow, const StandardNormal& base, std::size_t n, std::uint64_t seed);

}  // namespace mixerflow
