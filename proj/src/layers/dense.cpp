#include "mixerflow/layers/dense.hpp"

#include <cmath>
#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

Dense::Dense(std::string path, std::size_t in, std::size_t out, Rng& rng, DenseInit init)
    : Module(std::move(path)), in_(in), out_(out) {
  if (in == 0 || out == 0) throw ContractError(this->path() + ": dense layer extents must be positive");
  std::vector<double> w(in * out, 0.0);
  std::vector<double> b(out, 0.0);
  if (init == DenseInit::uniform) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.uniform(-bound, bound);
    for (double& v : b) v = rng.uniform(-bound, bound);
  }
  weight_ = &add_parameter("weight", Tensor({out, in}, std::move(w)));
  bias_ = &add_parameter("bias", Tensor({out}, std::move(b)));
}

void Dense::set_mask(std::vector<double> mask) {
  if (mask.size() != in_ * out_) throw DimensionError(path() + ": mask must have out*in entries");
  mask_ = Tensor({out_, in_}, std::move(mask));
}

Tensor Dense::operator()(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw DimensionError(path() + ": expected [n, " + std::to_string(in_) + "], got " + shape_to_string(x.shape()));
  }
  const Tensor w = mask_.defined() ? mul(weight_->value, mask_) : weight_->value;
  return linear(x, w, bias_->value);
}

FeatureNorm::FeatureNorm(std::string path, std::size_t features, double eps, double momentum)
    : Module(std::move(path)), features_(features), eps_(eps), momentum_(momentum) {
  gamma_ = &add_parameter("gamma", Tensor::full({features}, 1.0));
  beta_ = &add_parameter("beta", Tensor::zeros({features}));
  running_mean_ = &add_buffer("running_mean", Tensor::zeros({features}));
  running_var_ = &add_buffer("running_var", Tensor::full({features}, 1.0));
}

Tensor FeatureNorm::operator()(const Tensor& x, bool update_statistics) const {
  if (x.rank() != 2 || x.dim(1) != features_) {
    throw DimensionError(path() + ": expected [n, " + std::to_string(features_) + "], got " +
                         shape_to_string(x.shape()));
  }
  if (training()) {
    std::vector<double> mean;
    std::vector<double> var;
    Tensor y = batch_norm(x, gamma_->value, beta_->value, eps_, &mean, &var);
    if (update_statistics) {
      const double n = static_cast<double>(x.dim(0));
      const double unbias = n > 1 ? n / (n - 1) : 1.0;
      auto rm = running_mean_->value.mutable_values();
      auto rv = running_var_->value.mutable_values();
      for (std::size_t j = 0; j < features_; ++j) {
        rm[j] = (1 - momentum_) * rm[j] + momentum_ * mean[j];
        rv[j] = (1 - momentum_) * rv[j] + momentum_ * var[j] * unbias;
      }
    }
    return y;
  }
  const auto rm = running_mean_->value.values();
  const auto rv = running_var_->value.values();
  std::vector<double> inv_std(features_);
  for (std::size_t j = 0; j < features_; ++j) inv_std[j] = 1.0 / std::sqrt(rv[j] + eps_);
  const Tensor centered = sub(x, running_mean_->value);
  const Tensor normalized = mul(centered, Tensor({features_}, std::move(inv_std)));
  return add(mul(normalized, gamma_->value), beta_->value);
}

}  // namespace mixerflow
