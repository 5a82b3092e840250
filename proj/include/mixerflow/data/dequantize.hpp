#pragma once

#include <cstdint>

#include "mixerflow/data/dataset.hpp"

namespace mixerflow {

/// y = (x + u) / levels with u ~ U[0, 1) drawn from a stream keyed by (seed, batch_index).
/// Every y stays inside its bucket [x/levels, (x+1)/levels).
ImageBatch dequantize(const ImageBatch& batch, int levels, std::uint64_t seed, std::uint64_t batch_index = 0);

}  // namespace mixerflow
