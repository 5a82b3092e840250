#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mixerflow/substrate/tensor.hpp"

namespace mixerflow {

/// A batch of images, [b, ch, h, w]. Before dequantization the values are integers in
/// [0, 255]; afterwards they lie in [0, 1).
struct ImageBatch {
  Tensor pixels;
  std::vector<int> labels;  // empty when unlabelled
  bool dequantized = false;

  std::size_t size() const { return pixels.dim(0); }
};

/// Decoded 8-bit images held in memory, channel-planar per image.
struct ImageDataset {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;  // empty or one per image

  std::size_t size() const;
  std::size_t sample_size() const { return channels * height * width; }
  std::span<const std::uint8_t> image(std::size_t i) const;

  ImageBatch batch(std::span<const std::size_t> indices) const;
  ImageBatch all() const;
  ImageDataset subset(std::span<const std::size_t> indices) const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded partition of 0..n-1 holding out round(n·val_fraction) indices; both parts are sorted.
SplitIndices split_indices(std::size_t n, double val_fraction, std::uint64_t seed);

}  // namespace mixerflow
