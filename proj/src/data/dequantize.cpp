#include "mixerflow/data/dequantize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

ImageBatch dequantize(const ImageBatch& batch, int levels, std::uint64_t seed, std::uint64_t batch_index) {
  if (batch.dequantized) throw ContractError("batch is already dequantized");
  if (levels < 2) throw ContractError("dequantization needs at least 2 levels");
  const auto x = batch.pixels.values();
  const double top = levels - 1;
  std::vector<double> y(x.size());
  Rng rng(derive_seed(seed, batch_index));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (!(v >= 0.0 && v <= top) || v != std::floor(v))
      throw ContractError("pixel value " + std::to_string(v) + " is not an integer in [0, " + std::to_string(levels - 1) + "]");
    const double u = rng.uniform();
    // (v + u) can round up to v + 1 when u is within an ulp of 1
    y[i] = std::min((v + u) / levels, std::nextafter((v + 1.0) / levels, 0.0));
  }
  ImageBatch out;
  out.pixels = Tensor(batch.pixels.shape(), std::move(y));
  out.labels = batch.labels;
  out.dequantized = true;
  return out;
}

}  // namespace mixerflow
