#include "mixerflow/layers/shift.hpp"

#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

PatchGeometry shifted_geometry(const PatchGeometry& outer, std::size_t shift_h, std::size_t shift_w) {
  outer.validate();
  if (shift_h == 0 || shift_h >= outer.patch_h || shift_w == 0 || shift_w >= outer.patch_w) {
    throw GeometryError("shift (" + std::to_string(shift_h) + ", " + std::to_string(shift_w) +
                        ") must lie strictly between 0 and the patch extents (" + std::to_string(outer.patch_h) +
                        ", " + std::to_string(outer.patch_w) + ")");
  }
  if (outer.height < 2 * outer.patch_h || outer.width < 2 * outer.patch_w) {
    throw GeometryError("a " + std::to_string(outer.height) + "x" + std::to_string(outer.width) +
                        " image leaves no room for a shifted patch grid");
  }
  PatchGeometry inner = outer;
  inner.height = outer.height - outer.patch_h;
  inner.width = outer.width - outer.patch_w;
  inner.validate();
  return inner;
}

ShiftLayer::ShiftLayer(std::string path, PatchGeometry outer, std::size_t shift_h, std::size_t shift_w,
                       const InnerFactory& make_inner)
    : Bijection(std::move(path)), outer_(outer), inner_geometry_(shifted_geometry(outer, shift_h, shift_w)) {
  const PatchGeometry& in = inner_geometry_;
  const std::size_t in_grid_w = in.width / in.patch_w;
  const std::size_t out_grid_w = outer.width / outer.patch_w;
  const std::size_t c = outer.patch_width();
  slots_.reserve(in.dims());
  for (std::size_t k = 0; k < in.patches(); ++k) {
    const std::size_t top = shift_h + (k / in_grid_w) * in.patch_h;
    const std::size_t left = shift_w + (k % in_grid_w) * in.patch_w;
    for (std::size_t dy = 0; dy < in.patch_h; ++dy)
      for (std::size_t dx = 0; dx < in.patch_w; ++dx)
        for (std::size_t ch = 0; ch < in.channels; ++ch) {
          const std::size_t y = top + dy;
          const std::size_t x = left + dx;
          const std::size_t patch = (y / outer.patch_h) * out_grid_w + x / outer.patch_w;
          const std::size_t slot = ((y % outer.patch_h) * outer.patch_w + x % outer.patch_w) * outer.channels + ch;
          slots_.push_back(patch * c + slot);
        }
  }
  inner_ = &adopt(make_inner(child_path("inner"), inner_geometry_));
}

FlowResult ShiftLayer::forward(const Tensor& x) {
  const Shape expected = outer_.mixer_shape();
  if (x.rank() != 3 || x.dim(1) != expected[0] || x.dim(2) != expected[1]) {
    throw DimensionError(path() + ": expected mixer matrix " + shape_to_string(expected) + ", got " +
                         shape_to_string(x.shape()));
  }
  const FlowResult r = inner_->forward(gather(x, slots_, inner_geometry_.mixer_shape()));
  return {scatter(x, r.output, slots_), r.log_det};
}

Tensor ShiftLayer::inverse(const Tensor& z) {
  const Tensor inner = inner_->inverse(gather(z, slots_, inner_geometry_.mixer_shape()));
  return scatter(z, inner, slots_);
}

void ShiftLayer::visit(const std::function<void(Bijection&)>& fn) {
  fn(*this);
  inner_->visit(fn);
}

}  // namespace mixerflow
