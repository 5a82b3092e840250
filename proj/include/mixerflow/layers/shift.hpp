#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/layers/geometry.hpp"

namespace mixerflow {

/// Runs an inner layer on patches re-extracted from the image region
/// rows s_h .. h − p_h + s_h and columns s_w .. w − p_w + s_w. Pixels outside that region
/// (the frame) are passed through. Input and output are channel-major mixer matrices of
/// the outer geometry.
class ShiftLayer : public Bijection {
 public:
  using InnerFactory = std::function<std::unique_ptr<Bijection>(const std::string& path, const PatchGeometry& inner)>;

  ShiftLayer(std::string path, PatchGeometry outer, std::size_t shift_h, std::size_t shift_w,
             const InnerFactory& make_inner);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;
  bool initialized() const override { return inner_->initialized(); }
  void visit(const std::function<void(Bijection&)>& fn) override;

  const PatchGeometry& inner_geometry() const { return inner_geometry_; }
  /// Outer mixer-matrix slots read by the inner layer, in inner mixer-matrix order.
  const std::vector<std::size_t>& inner_slots() const { return slots_; }
  Bijection& inner() { return *inner_; }

 private:
  PatchGeometry outer_;
  PatchGeometry inner_geometry_;
  std::vector<std::size_t> slots_;
  Bijection* inner_;
};

/// The geometry a shift by (shift_h, shift_w) leaves for the inner layer; throws GeometryError
/// unless 0 < shift < patch extent and the inner region holds at least one patch.
PatchGeometry shifted_geometry(const PatchGeometry& outer, std::size_t shift_h, std::size_t shift_w);

}  // namespace mixerflow
