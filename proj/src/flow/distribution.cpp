#include "mixerflow/flow/distribution.hpp"

#include <cmath>
#include <numbers>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

StandardNormal::StandardNormal(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ContractError("StandardNormal: dimension must be positive");
}

Tensor StandardNormal::log_prob(const Tensor& z) const {
  const std::size_t batch = z.dim(0);
  if (z.numel() != batch * dim_) {
    throw DimensionError("log_prob: expected " + std::to_string(dim_) + " values per sample, got shape " +
                         shape_to_string(z.shape()));
  }
  const Tensor flat = reshape(z, {batch, dim_});
  const double norm = -0.5 * static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi);
  return add_scalar(scale(sum(square(flat), {1}), -0.5), norm);
}

Tensor StandardNormal::sample(std::size_t n, Rng& rng) const { return Tensor({n, dim_}, rng.normals(n * dim_)); }

}  // namespace mixerflow
