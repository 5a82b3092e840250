#include "mixerflow/train/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

Adam::Adam(std::vector<Parameter*> parameters, AdamOptions options)
    : parameters_(std::move(parameters)), options_(options) {
  for (Parameter* p : parameters_) {
    m_.emplace_back(p->value.numel(), 0.0);
    v_.emplace_back(p->value.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < parameters_.size(); ++k) {
    Parameter& p = *parameters_[k];
    auto value = p.value.mutable_values();
    auto grad = p.value.mutable_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    bool finite = true;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
      finite = finite && std::isfinite(value[i]);
    }
    if (!finite) throw NumericError("Adam: parameter " + p.name + " became non-finite");
  }
}

void Adam::zero_grad() {
  for (Parameter* p : parameters_) p->value.zero_grad();
}

double cosine_lr(double lr0, std::uint64_t step, std::uint64_t total_steps, double lr_min) {
  if (total_steps == 0 || step >= total_steps) return step == 0 && total_steps == 0 ? lr0 : lr_min;
  const double ratio = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + (lr0 - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * ratio));
}

double global_grad_norm(std::span<Parameter* const> parameters) {
  double total = 0.0;
  for (Parameter* p : parameters) {
    for (double g : p->value.mutable_grad()) total += g * g;
  }
  return std::sqrt(total);
}

double clip_global_norm(std::span<Parameter* const> parameters, double max_norm) {
  const double norm = global_grad_norm(parameters);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : parameters) {
      for (double& g : p->value.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace mixerflow
