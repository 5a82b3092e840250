#include "mixerflow/flow/density.hpp"

#include <cmath>
#include <numbers>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

void check_bpd_args(std::ptrdiff_t dims, int levels) {
  if (dims <= 0) throw ContractError("bits_per_dim: dimensionality must be positive, got " + std::to_string(dims));
  if (levels < 1) throw ContractError("bits_per_dim: dequantization levels must be positive");
}

}  // namespace

DensityResult log_likelihood(Bijection& flow, const StandardNormal& base, const Tensor& x, int dequant_levels) {
  if (!flow.initialized()) {
    throw InitializationError("log_likelihood: flow has uninitialized data-dependent layers (run a first batch)");
  }
  const std::size_t batch = x.dim(0);
  if (x.numel() != batch * base.dim()) {
    throw DimensionError("log_likelihood: input " + shape_to_string(x.shape()) + " does not match base dimension " +
                         std::to_string(base.dim()));
  }
  FlowResult r = flow.forward(x);
  Tensor log_prob = add(base.log_prob(r.output), r.log_det);
  Tensor bpd = bits_per_dim(log_prob, static_cast<std::ptrdiff_t>(base.dim()), dequant_levels);
  return {log_prob, r.log_det, bpd};
}

Tensor bits_per_dim(const Tensor& log_prob_nats, std::ptrdiff_t dims, int dequant_levels) {
  check_bpd_args(dims, dequant_levels);
  const double factor = -1.0 / (static_cast<double>(dims) * std::numbers::ln2);
  return add_scalar(scale(log_prob_nats, factor), std::log2(static_cast<double>(dequant_levels)));
}

double bits_per_dim(double log_prob_nats, std::ptrdiff_t dims, int dequant_levels) {
  check_bpd_args(dims, dequant_levels);
  return -log_prob_nats / (static_cast<double>(dims) * std::numbers::ln2) +
         std::log2(static_cast<double>(dequant_levels));
}

Tensor sample(Bijection& flow, const StandardNormal& base, std::size_t n, std::uint64_t seed) {
  if (!flow.initialized()) throw InitializationError("sample: flow has uninitialized data-dependent layers");
  NoGradGuard no_grad;
  Rng rng(seed);
  Tensor z = base.sample(n, rng);
  return flow.inverse(z);
}

}  // namespace mixerflow
