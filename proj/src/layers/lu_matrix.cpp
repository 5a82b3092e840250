#include "mixerflow/layers/lu_matrix.hpp"

#include <cmath>
#include <string>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/linalg.hpp"

namespace mixerflow {

namespace {

const double kMinLogDiag = std::log(1e-12);

std::size_t strict_count(std::size_t k) { return k * (k - 1) / 2; }

// A zero-size parameter is not representable, so a 1x1 matrix keeps one unused slot.
std::size_t storage(std::size_t k) { return std::max<std::size_t>(strict_count(k), 1); }

}  // namespace

LuMatrix::LuMatrix(std::string path, std::size_t size, LinearMode mode)
    : Module(std::move(path)), size_(size), mode_(mode) {
  if (size == 0) throw ContractError("LuMatrix: size must be positive");
  const std::size_t k = size;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < i; ++j) lower_index_.push_back(i * k + j);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) upper_index_.push_back(i * k + j);
  for (std::size_t i = 0; i < k; ++i) upper_index_.push_back(i * k + i);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) reverse_rows_.push_back((k - 1 - i) * k + j);

  std::vector<double> eye(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
  identity_ = Tensor({1, k * k}, eye);
  zeros_ = Tensor::zeros({1, k * k});

  lower_ = &add_parameter("lower", Tensor::zeros({storage(k)}));
  upper_ = &add_parameter("upper", Tensor::zeros({storage(k)}));
  log_diag_ = &add_parameter("log_diag", Tensor::zeros({k}));
  sign_ = &add_buffer("sign", Tensor::full({k}, 1.0));
}

Tensor LuMatrix::weight() const {
  const std::size_t k = size_;
  const std::size_t m = strict_count(k);
  const Tensor diag_values = mul(exp(log_diag_->value), sign_->value);
  Tensor l = identity_;
  Tensor u_values = reshape(diag_values, {1, k});
  if (m > 0) {
    l = scatter(identity_, reshape(lower_->value, {1, m}), lower_index_);
    u_values = concat_last(reshape(upper_->value, {1, m}), u_values);
  }
  const Tensor u = scatter(zeros_, u_values, upper_index_);
  Tensor w = reshape(matmul(reshape(l, {k, k}), reshape(u, {k, k})), {1, k * k});
  if (mode_ == LinearMode::rlu) w = gather(w, reverse_rows_, {k * k});
  return reshape(w, {k, k});
}

Tensor LuMatrix::log_abs_det() const { return sum(log_diag_->value); }

void LuMatrix::check_conditioning() const {
  const auto v = log_diag_->value.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < kMinLogDiag) {
      throw ConditioningError(path() + ": |diag(U)[" + std::to_string(i) + "]| = " + std::to_string(std::exp(v[i])) +
                              " is below 1e-12");
    }
  }
}

void LuMatrix::solve_rows(std::span<double> rows, std::size_t count) const {
  check_conditioning();
  const std::size_t k = size_;
  std::vector<double> l(k * k, 0.0);
  std::vector<double> u(k * k, 0.0);
  const auto lo = lower_->value.values();
  const auto up = upper_->value.values();
  const auto ld = log_diag_->value.values();
  const auto sg = sign_->value.values();
  for (std::size_t i = 0; i < strict_count(k); ++i) {
    l[lower_index_[i]] = lo[i];
    u[upper_index_[i]] = up[i];
  }
  for (std::size_t i = 0; i < k; ++i) u[i * k + i] = sg[i] * std::exp(ld[i]);

  std::vector<double> tmp(k);
  for (std::size_t r = 0; r < count; ++r) {
    std::span<double> row = rows.subspan(r * k, k);
    if (mode_ == LinearMode::rlu) {
      for (std::size_t i = 0; i < k; ++i) tmp[i] = row[k - 1 - i];
      std::copy(tmp.begin(), tmp.end(), row.begin());
    }
    linalg::solve_unit_lower(l, k, row);
    linalg::solve_upper(u, k, row);
  }
}

void LuMatrix::randomize(Rng& rng, double scale) {
  for (Parameter* p : {lower_, upper_, log_diag_}) {
    for (double& v : p->value.mutable_values()) v = rng.uniform(-scale, scale);
  }
  for (double& s : sign_->value.mutable_values()) s = rng.uniform() < 0.5 ? -1.0 : 1.0;
}

void LuMatrix::set_factors(std::span<const double> lower, std::span<const double> upper,
                           std::span<const double> log_diag, std::span<const double> sign) {
  const std::size_t k = size_;
  if (lower.size() != k * k || upper.size() != k * k || log_diag.size() != k || sign.size() != k) {
    throw DimensionError("LuMatrix::set_factors: expected k*k, k*k, k and k values");
  }
  auto lo = lower_->value.mutable_values();
  auto up = upper_->value.mutable_values();
  for (std::size_t i = 0; i < strict_count(k); ++i) {
    lo[i] = lower[lower_index_[i]];
    up[i] = upper[upper_index_[i]];
  }
  std::copy(log_diag.begin(), log_diag.end(), log_diag_->value.mutable_values().begin());
  for (std::size_t i = 0; i < k; ++i) {
    if (sign[i] != 1.0 && sign[i] != -1.0) throw ContractError("LuMatrix::set_factors: signs must be +1 or -1");
  }
  std::copy(sign.begin(), sign.end(), sign_->value.mutable_values().begin());
}

}  // namespace mixerflow
