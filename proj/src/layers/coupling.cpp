#include "mixerflow/layers/coupling.hpp"

#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

void check_raw_scale(const Tensor& s_raw, const std::string& layer, double sign) {
  for (double v : s_raw.values()) {
    if (sign * v > kMaxRawScale) {
      throw NumericError("[layer " + layer + "] scale overflow: s_raw = " + std::to_string(v) +
                         " exceeds the exp range limit");
    }
  }
}

AffineCoupling::AffineCoupling(std::string path, std::size_t width, ScaleLaw law,
                               std::unique_ptr<Conditioner> conditioner)
    : Bijection(std::move(path)), width_(width), split_(width / 2), law_(law) {
  if (width < 2) throw ContractError(this->path() + ": coupling needs rows of width at least 2");
  if (conditioner->in() != width - split_ || conditioner->out() != 2 * split_) {
    throw DimensionError(this->path() + ": conditioner must map " + std::to_string(width - split_) + " -> " +
                         std::to_string(2 * split_));
  }
  conditioner_ = &adopt(std::move(conditioner));
}

AffineCoupling::Params AffineCoupling::params(const Tensor& untouched, bool update_statistics, bool inverting) {
  const Tensor raw = (*conditioner_)(untouched, update_statistics);
  const Tensor s_raw = slice_last(raw, 0, split_);
  Params p;
  p.shift = slice_last(raw, split_, 2 * split_);
  if (law_ == ScaleLaw::exp) {
    check_raw_scale(s_raw, path(), inverting ? -1.0 : 1.0);
    p.log_scale = s_raw;
    p.scale = exp(s_raw);
  } else {
    const Tensor shifted = add_scalar(s_raw, 2.0);
    p.log_scale = log_sigmoid(shifted);
    p.scale = sigmoid(shifted);
  }
  return p;
}

FlowResult AffineCoupling::forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) != width_) {
    throw DimensionError(path() + ": expected rows of width " + std::to_string(width_) + ", got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t n = x.dim(1);
  const Tensor flat = reshape(x, {b * n, width_});
  const Tensor xd = slice_last(flat, 0, split_);
  const Tensor xu = slice_last(flat, split_, width_);
  const Params p = params(xu, true, false);
  const Tensor yd = add(mul(xd, p.scale), p.shift);
  const Tensor y = reshape(concat_last(yd, xu), x.shape());
  const Tensor log_det = sum(reshape(p.log_scale, {b, n * split_}), {1});
  return {y, log_det};
}

Tensor AffineCoupling::inverse(const Tensor& z) {
  if (z.rank() != 3 || z.dim(2) != width_) {
    throw DimensionError(path() + ": expected rows of width " + std::to_string(width_) + ", got " +
                         shape_to_string(z.shape()));
  }
  const std::size_t rows = z.dim(0) * z.dim(1);
  const Tensor flat = reshape(z, {rows, width_});
  const Tensor yd = slice_last(flat, 0, split_);
  const Tensor yu = slice_last(flat, split_, width_);
  const Params p = params(yu, false, true);
  const Tensor xd = div(sub(yd, p.shift), p.scale);
  return reshape(concat_last(xd, yu), z.shape());
}

std::unique_ptr<AffineCoupling> make_affine_coupling(const std::string& path, std::size_t width, ScaleLaw law,
                                                     const ConditionerOptions& options, Rng& rng) {
  if (width < 2) throw ContractError(path + ": coupling needs rows of width at least 2");
  const std::size_t d = width / 2;
  auto conditioner = std::make_unique<ResidualConditioner>(path + ".residual", width - d, 2 * d, options, rng);
  return std::make_unique<AffineCoupling>(path, width, law, std::move(conditioner));
}

}  // namespace mixerflow
