#include "mixerflow/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

std::size_t ImageDataset::size() const { return sample_size() == 0 ? 0 : pixels.size() / sample_size(); }

std::span<const std::uint8_t> ImageDataset::image(std::size_t i) const {
  if (i >= size()) throw ContractError("image index " + std::to_string(i) + " out of range");
  return std::span<const std::uint8_t>(pixels).subspan(i * sample_size(), sample_size());
}

ImageBatch ImageDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("empty batch requested");
  const std::size_t per = sample_size();
  std::vector<double> values(indices.size() * per);
  ImageBatch out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto img = image(indices[i]);
    std::copy(img.begin(), img.end(), values.begin() + static_cast<std::ptrdiff_t>(i * per));
    if (!labels.empty()) out.labels.push_back(labels[indices[i]]);
  }
  out.pixels = Tensor({indices.size(), channels, height, width}, std::move(values));
  return out;
}

ImageBatch ImageDataset::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch(idx);
}

ImageDataset ImageDataset::subset(std::span<const std::size_t> indices) const {
  ImageDataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.pixels.reserve(indices.size() * sample_size());
  for (std::size_t i : indices) {
    const auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    if (!labels.empty()) out.labels.push_back(labels[i]);
  }
  return out;
}

SplitIndices split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ContractError("validation fraction must lie in [0, 1)");
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  SplitIndices s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace mixerflow
