#include "mixerflow/layers/geometry.hpp"

#include <algorithm>
#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

std::vector<std::size_t> invert(const std::vector<std::size_t>& map) {
  std::vector<std::size_t> inv(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) inv[map[i]] = i;
  return inv;
}

std::vector<std::size_t> transpose_map(std::size_t rows, std::size_t cols) {
  // out[c', r'] = in[r', c']
  std::vector<std::size_t> map(rows * cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) map[c * rows + r] = r * cols + c;
  return map;
}

void expect_rank(const Tensor& x, std::size_t rank, const char* what) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(x.shape()));
  }
}

}  // namespace

void PatchGeometry::validate() const {
  if (height == 0 || width == 0 || channels == 0 || patch_h == 0 || patch_w == 0) {
    throw GeometryError("geometry extents must be positive");
  }
  if (height % patch_h != 0 || width % patch_w != 0) {
    throw GeometryError("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                        " does not tile a " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
}

std::vector<std::size_t> patch_index_map(const PatchGeometry& g) {
  g.validate();
  const std::size_t grid_w = g.width / g.patch_w;
  std::vector<std::size_t> map;
  map.reserve(g.dims());
  for (std::size_t k = 0; k < g.patches(); ++k) {
    const std::size_t top = (k / grid_w) * g.patch_h;
    const std::size_t left = (k % grid_w) * g.patch_w;
    for (std::size_t dy = 0; dy < g.patch_h; ++dy)
      for (std::size_t dx = 0; dx < g.patch_w; ++dx)
        for (std::size_t ch = 0; ch < g.channels; ++ch)
          map.push_back((ch * g.height + top + dy) * g.width + left + dx);
  }
  return map;
}

MixerMatrix patchify(const Tensor& image, const PatchGeometry& geometry) {
  expect_rank(image, 4, "patchify");
  const Shape expected = geometry.image_shape();
  if (!std::equal(expected.begin(), expected.end(), image.shape().begin() + 1)) {
    throw GeometryError("patchify: image " + shape_to_string(image.shape()) + " does not match geometry " +
                        shape_to_string(expected));
  }
  const auto map = patch_index_map(geometry);
  return {gather(image, map, geometry.mixer_shape()), geometry, Orientation::channel_major};
}

Tensor depatchify(const MixerMatrix& m) {
  const MixerMatrix rows = m.orientation == Orientation::channel_major ? m : transpose_mixer(m);
  const auto inv = invert(patch_index_map(m.geometry));
  return gather(rows.values, inv, m.geometry.image_shape());
}

Tensor transpose_rows(const Tensor& x) {
  expect_rank(x, 3, "transpose");
  const std::size_t r = x.dim(1);
  const std::size_t c = x.dim(2);
  const auto map = transpose_map(r, c);
  return gather(x, map, {c, r});
}

MixerMatrix transpose_mixer(const MixerMatrix& m) {
  const Orientation flipped =
      m.orientation == Orientation::channel_major ? Orientation::patch_major : Orientation::channel_major;
  return {transpose_rows(m.values), m.geometry, flipped};
}

Patchify::Patchify(std::string path, PatchGeometry geometry)
    : Bijection(std::move(path)), geometry_(geometry), forward_map_(patch_index_map(geometry)),
      inverse_map_(invert(forward_map_)) {}

FlowResult Patchify::forward(const Tensor& x) {
  expect_rank(x, 4, "Patchify");
  return {gather(x, forward_map_, geometry_.mixer_shape()), zero_log_det(x.dim(0))};
}

Tensor Patchify::inverse(const Tensor& z) {
  expect_rank(z, 3, "Patchify inverse");
  return gather(z, inverse_map_, geometry_.image_shape());
}

FlowResult TransposeMixer::forward(const Tensor& x) { return {transpose_rows(x), zero_log_det(x.dim(0))}; }

Tensor TransposeMixer::inverse(const Tensor& z) { return transpose_rows(z); }

Flatten::Flatten(std::string path, Shape sample_shape)
    : Bijection(std::move(path)), sample_shape_(std::move(sample_shape)) {}

FlowResult Flatten::forward(const Tensor& x) {
  const std::size_t b = x.dim(0);
  return {reshape(x, {b, x.numel() / b}), zero_log_det(b)};
}

Tensor Flatten::inverse(const Tensor& z) {
  Shape shape{z.dim(0)};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  return reshape(z, shape);
}

}  // namespace mixerflow
