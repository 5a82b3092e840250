#include "mixerflow/layers/maf.hpp"

#include <cmath>
#include <string>

#include "mixerflow/layers/coupling.hpp"
#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

MafLayer::MafLayer(std::string path, std::size_t width, const MadeOptions& options, Rng& rng)
    : Bijection(std::move(path)), width_(width) {
  made_ = &adopt(std::make_unique<MadeNetwork>(child_path("made"), width, options, rng));
}

FlowResult MafLayer::forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) != width_) {
    throw DimensionError(path() + ": expected rows of width " + std::to_string(width_) + ", got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t n = x.dim(1);
  const Tensor flat = reshape(x, {b * n, width_});
  const Tensor raw = (*made_)(flat);
  const Tensor s_raw = slice_last(raw, 0, width_);
  const Tensor t = slice_last(raw, width_, 2 * width_);
  check_raw_scale(s_raw, path());
  const Tensor y = add(mul(flat, exp(s_raw)), t);
  return {reshape(y, x.shape()), sum(reshape(s_raw, {b, n * width_}), {1})};
}

Tensor MafLayer::inverse(const Tensor& z) {
  if (z.rank() != 3 || z.dim(2) != width_) {
    throw DimensionError(path() + ": expected rows of width " + std::to_string(width_) + ", got " +
                         shape_to_string(z.shape()));
  }
  NoGradGuard no_grad;
  const std::size_t rows = z.dim(0) * z.dim(1);
  const std::size_t k = width_;
  const auto y = z.values();
  std::vector<double> x(rows * k, 0.0);
  // Pass i fixes coordinate i; x_<i are already exact, so s_raw_i and t_i are too.
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor raw = (*made_)(Tensor({rows, k}, x));
    const auto r = raw.values();
    for (std::size_t row = 0; row < rows; ++row) {
      const double s = r[row * 2 * k + i];
      const double t = r[row * 2 * k + k + i];
      if (-s > kMaxRawScale) {
        throw NumericError("[layer " + path() + "] scale overflow during inversion: s_raw = " + std::to_string(s));
      }
      x[row * k + i] = (y[row * k + i] - t) * std::exp(-s);
    }
  }
  return Tensor(z.shape(), std::move(x));
}

}  // namespace mixerflow
