#include "mixerflow/layers/actnorm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

thread_local bool t_data_init = false;

const double kMinLogScale = std::log(1e-12);

}  // namespace

DataInitScope::DataInitScope() : previous_(t_data_init) { t_data_init = true; }
DataInitScope::~DataInitScope() { t_data_init = previous_; }
bool DataInitScope::active() { return t_data_init; }

ActNorm::ActNorm(std::string path, Shape sample_shape, double min_std)
    : Bijection(std::move(path)), sample_shape_(std::move(sample_shape)), min_std_(min_std) {
  log_scale_ = &add_parameter("log_scale", Tensor::zeros(sample_shape_));
  bias_ = &add_parameter("bias", Tensor::zeros(sample_shape_));
  initialized_ = &add_buffer("initialized", Tensor::zeros({1}));
}

bool ActNorm::initialized() const { return initialized_->value[0] != 0.0; }

void ActNorm::set_identity() {
  for (double& v : log_scale_->value.mutable_values()) v = 0.0;
  for (double& v : bias_->value.mutable_values()) v = 0.0;
  initialized_->value.mutable_values()[0] = 1.0;
}

void ActNorm::initialize_from(const Tensor& x) {
  const std::size_t per = shape_numel(sample_shape_);
  const std::size_t b = x.dim(0);
  if (x.numel() != b * per) {
    throw DimensionError(path() + ": initialization batch " + shape_to_string(x.shape()) + " does not match " +
                         shape_to_string(sample_shape_));
  }
  const auto v = x.values();
  auto ls = log_scale_->value.mutable_values();
  auto bs = bias_->value.mutable_values();
  for (std::size_t j = 0; j < per; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < b; ++i) mean += v[i * per + j];
    mean /= static_cast<double>(b);
    double var = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const double d = v[i * per + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(b);
    const double s = 1.0 / (std::max(std::sqrt(var), min_std_) + 1e-6);
    ls[j] = std::log(s);
    bs[j] = -mean * s;
  }
  initialized_->value.mutable_values()[0] = 1.0;
}

void ActNorm::check_ready() const {
  if (!initialized()) {
    throw InitializationError(path() + ": used before data-dependent initialization");
  }
  const auto ls = log_scale_->value.values();
  for (std::size_t j = 0; j < ls.size(); ++j) {
    if (ls[j] < kMinLogScale) {
      throw ConditioningError(path() + ": |scale[" + std::to_string(j) + "]| is below 1e-12");
    }
  }
}

FlowResult ActNorm::forward(const Tensor& x) {
  if (!initialized() && DataInitScope::active()) initialize_from(x);
  check_ready();
  const std::size_t b = x.dim(0);
  if (x.numel() != b * shape_numel(sample_shape_)) {
    throw DimensionError(path() + ": input " + shape_to_string(x.shape()) + " does not match " +
                         shape_to_string(sample_shape_));
  }
  Shape full{b};
  full.insert(full.end(), sample_shape_.begin(), sample_shape_.end());
  const Tensor xs = reshape(x, full);
  const Tensor y = add(mul(xs, exp(log_scale_->value)), bias_->value);
  return {reshape(y, x.shape()), broadcast_to(reshape(sum(log_scale_->value), {1}), {b})};
}

Tensor ActNorm::inverse(const Tensor& z) {
  check_ready();
  const auto ls = log_scale_->value.values();
  const auto bs = bias_->value.values();
  const std::size_t per = ls.size();
  const auto v = z.values();
  if (v.size() % per != 0) throw DimensionError(path() + ": inverse input " + shape_to_string(z.shape()));
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t j = i % per;
    out[i] = (v[i] - bs[j]) * std::exp(-ls[j]);
  }
  return Tensor(z.shape(), std::move(out));
}

}  // namespace mixerflow
