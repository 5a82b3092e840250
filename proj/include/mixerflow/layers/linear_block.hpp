#pragma once

#include <cstddef>
#include <vector>

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/layers/geometry.hpp"
#include "mixerflow/layers/lu_matrix.hpp"

namespace mixerflow {

/// The same invertible k x k matrix applied to every row of [b, n, k]; per-sample log-det is
/// n·log|det W|.
class LinearBlock : public Bijection {
 public:
  LinearBlock(std::string path, std::size_t width, LinearMode mode);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;

  LuMatrix& matrix() { return *matrix_; }

 private:
  std::size_t width_;
  LuMatrix* matrix_;
};

/// Channel mixing at every pixel of a [b, ch, h, w] image.
class Conv1x1 : public Bijection {
 public:
  Conv1x1(std::string path, PatchGeometry geometry, LinearMode mode = LinearMode::lu);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;

  LuMatrix& matrix() { return *matrix_; }

 private:
  PatchGeometry geometry_;
  std::vector<std::size_t> to_pixels_;    // [ch, h, w] -> [hw, ch]
  std::vector<std::size_t> from_pixels_;  // inverse of the above
  LuMatrix* matrix_;
};

/// Per-sample log-det tensor holding `value` for each of `batch` samples.
Tensor repeat_log_det(const Tensor& value, std::size_t batch);

}  // namespace mixerflow
