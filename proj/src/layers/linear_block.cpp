#include "mixerflow/layers/linear_block.hpp"

#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

Tensor repeat_log_det(const Tensor& value, std::size_t batch) { return broadcast_to(reshape(value, {1}), {batch}); }

LinearBlock::LinearBlock(std::string path, std::size_t width, LinearMode mode)
    : Bijection(std::move(path)), width_(width) {
  matrix_ = &adopt(std::make_unique<LuMatrix>(child_path("lu"), width, mode));
}

FlowResult LinearBlock::forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) != width_) {
    throw DimensionError(path() + ": expected rows of width " + std::to_string(width_) + ", got " +
                         shape_to_string(x.shape()));
  }
  matrix_->check_conditioning();
  const std::size_t b = x.dim(0);
  const std::size_t n = x.dim(1);
  const Tensor y = linear(reshape(x, {b * n, width_}), matrix_->weight());
  const Tensor log_det = scale(matrix_->log_abs_det(), static_cast<double>(n));
  return {reshape(y, x.shape()), repeat_log_det(log_det, b)};
}

Tensor LinearBlock::inverse(const Tensor& z) {
  if (z.rank() != 3 || z.dim(2) != width_) {
    throw DimensionError(path() + ": expected rows of width " + std::to_string(width_) + ", got " +
                         shape_to_string(z.shape()));
  }
  std::vector<double> rows(z.values().begin(), z.values().end());
  matrix_->solve_rows(rows, z.numel() / width_);
  return Tensor(z.shape(), std::move(rows));
}

Conv1x1::Conv1x1(std::string path, PatchGeometry geometry, LinearMode mode)
    : Bijection(std::move(path)), geometry_(geometry) {
  const std::size_t ch = geometry.channels;
  const std::size_t hw = geometry.height * geometry.width;
  to_pixels_.resize(ch * hw);
  from_pixels_.resize(ch * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < ch; ++c) {
      to_pixels_[p * ch + c] = c * hw + p;
      from_pixels_[c * hw + p] = p * ch + c;
    }
  matrix_ = &adopt(std::make_unique<LuMatrix>(child_path("lu"), ch, mode));
}

FlowResult Conv1x1::forward(const Tensor& x) {
  const Shape expected = geometry_.image_shape();
  if (x.rank() != 4 || !std::equal(expected.begin(), expected.end(), x.shape().begin() + 1)) {
    throw DimensionError(path() + ": expected images " + shape_to_string(expected) + ", got " +
                         shape_to_string(x.shape()));
  }
  matrix_->check_conditioning();
  const std::size_t b = x.dim(0);
  const std::size_t ch = geometry_.channels;
  const std::size_t hw = geometry_.height * geometry_.width;
  const Tensor pixels = reshape(gather(x, to_pixels_, {hw, ch}), {b * hw, ch});
  const Tensor mixed = reshape(linear(pixels, matrix_->weight()), {b, hw * ch});
  const Tensor log_det = scale(matrix_->log_abs_det(), static_cast<double>(hw));
  return {gather(mixed, from_pixels_, expected), repeat_log_det(log_det, b)};
}

Tensor Conv1x1::inverse(const Tensor& z) {
  const std::size_t b = z.dim(0);
  const std::size_t ch = geometry_.channels;
  const std::size_t per = geometry_.dims();
  if (z.numel() != b * per) throw DimensionError(path() + ": inverse input " + shape_to_string(z.shape()));
  const auto v = z.values();
  std::vector<double> pixels(b * per);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t j = 0; j < per; ++j) pixels[s * per + j] = v[s * per + to_pixels_[j]];
  matrix_->solve_rows(pixels, b * per / ch);
  std::vector<double> out(b * per);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t j = 0; j < per; ++j) out[s * per + j] = pixels[s * per + from_pixels_[j]];
  Shape shape{b};
  const Shape img = geometry_.image_shape();
  shape.insert(shape.end(), img.begin(), img.end());
  return Tensor(shape, std::move(out));
}

}  // namespace mixerflow
