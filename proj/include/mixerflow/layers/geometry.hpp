#pragma once

#include <cstddef>
#include <vector>

#include "mixerflow/flow/bijection.hpp"

namespace mixerflow {

/// Image extents and the non-overlapping patch grid laid over them.
struct PatchGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::size_t patch_h = 1;
  std::size_t patch_w = 1;

  std::size_t patches() const { return (height / patch_h) * (width / patch_w); }
  std::size_t patch_width() const { return patch_h * patch_w * channels; }
  std::size_t dims() const { return height * width * channels; }
  Shape image_shape() const { return {channels, height, width}; }
  Shape mixer_shape() const { return {patches(), patch_width()}; }

  /// Throws GeometryError unless the patches tile the image exactly.
  void validate() const;
  bool operator==(const PatchGeometry&) const = default;
};

/// For every mixer-matrix slot (patch k, slot j) the flat index into the [channels, h, w]
/// image it reads. Patches go in raster order; a patch is flattened row-major over
/// (dy, dx) with the channel varying fastest.
std::vector<std::size_t> patch_index_map(const PatchGeometry& geometry);

enum class Orientation { channel_major, patch_major };

/// A batch viewed as [batch, n_p, c] (channel_major) or [batch, c, n_p] (patch_major).
struct MixerMatrix {
  Tensor values;
  PatchGeometry geometry;
  Orientation orientation = Orientation::channel_major;
};

MixerMatrix patchify(const Tensor& image, const PatchGeometry& geometry);
Tensor depatchify(const MixerMatrix& m);
MixerMatrix transpose_mixer(const MixerMatrix& m);

/// Swaps the two trailing axes of a [batch, r, c] tensor.
Tensor transpose_rows(const Tensor& x);

/// [b, ch, h, w] -> [b, n_p, c]; volume preserving.
class Patchify : public Bijection {
 public:
  Patchify(std::string path, PatchGeometry geometry);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;
  const PatchGeometry& geometry() const { return geometry_; }

 private:
  PatchGeometry geometry_;
  std::vector<std::size_t> forward_map_;
  std::vector<std::size_t> inverse_map_;
};

/// [b, r, c] -> [b, c, r]; volume preserving.
class TransposeMixer : public Bijection {
 public:
  using Bijection::Bijection;

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;
};

/// Collapses everything after the batch axis (row-major) so the base distribution sees [b, D].
class Flatten : public Bijection {
 public:
  Flatten(std::string path, Shape sample_shape);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;

 private:
  Shape sample_shape_;
};

}  // namespace mixerflow
