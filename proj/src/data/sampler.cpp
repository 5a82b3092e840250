#include "mixerflow/data/sampler.hpp"

#include <string>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : n_(dataset_size), batch_(batch_size), seed_(seed) {
  if (batch_ == 0) throw ContractError("batch size must be positive");
  if (n_ < batch_)
    throw ContractError("dataset of " + std::to_string(n_) + " samples is smaller than one batch of " +
                        std::to_string(batch_));
  per_epoch_ = n_ / batch_;
}

std::vector<std::size_t> BatchSampler::indices(std::uint64_t step) {
  const std::uint64_t epoch = step / per_epoch_;
  if (epoch != cached_epoch_) {
    Rng rng(derive_seed(seed_, epoch));
    order_ = rng.permutation(n_);
    cached_epoch_ = epoch;
  }
  const std::size_t start = static_cast<std::size_t>(step % per_epoch_) * batch_;
  return {order_.begin() + static_cast<std::ptrdiff_t>(start), order_.begin() + static_cast<std::ptrdiff_t>(start + batch_)};
}

}  // namespace mixerflow
