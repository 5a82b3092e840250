#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mixerflow {

/// Minibatch indices as a pure function of the step: epoch e visits a permutation seeded by
/// (seed, e) in consecutive slices, dropping the ragged tail. Resuming at any step therefore
/// replays the same batches without carrying sampler state.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> indices(std::uint64_t step);
  std::size_t batches_per_epoch() const { return per_epoch_; }
  std::size_t batch_size() const { return batch_; }

 private:
  std::size_t n_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t per_epoch_;
  std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  std::vector<std::size_t> order_;
};

}  // namespace mixerflow
