#include "mixerflow/flow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/linalg.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

std::vector<double> finite_difference_jacobian(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                                               double step) {
  if (x.dim(0) != 1) throw ContractError("finite_difference_jacobian: expects a single sample");
  const std::size_t d_in = x.numel();
  Shape batch_shape = x.shape();
  batch_shape[0] = 2 * d_in;

  std::vector<double> perturbed(2 * d_in * d_in);
  for (std::size_t j = 0; j < d_in; ++j) {
    double* plus = perturbed.data() + (2 * j) * d_in;
    double* minus = plus + d_in;
    std::copy(x.values().begin(), x.values().end(), plus);
    std::copy(x.values().begin(), x.values().end(), minus);
    plus[j] += step;
    minus[j] -= step;
  }
  NoGradGuard no_grad;
  const Tensor y = fn(Tensor(batch_shape, std::move(perturbed)));
  const std::size_t d_out = y.numel() / (2 * d_in);
  const auto v = y.values();

  std::vector<double> jac(d_out * d_in);
  for (std::size_t j = 0; j < d_in; ++j) {
    const double* plus = v.data() + (2 * j) * d_out;
    const double* minus = plus + d_out;
    for (std::size_t i = 0; i < d_out; ++i) jac[i * d_in + j] = (plus[i] - minus[i]) / (2.0 * step);
  }
  return jac;
}

namespace {

class EvalModeScope {
 public:
  explicit EvalModeScope(Bijection& b) : b_(b), previous_(b.training()) { b_.set_training(false); }
  ~EvalModeScope() { b_.set_training(previous_); }

 private:
  Bijection& b_;
  bool previous_;
};

}  // namespace

VerifyReport verify_bijection(Bijection& b, const Shape& sample_shape, const VerifyOptions& options) {
  VerifyReport report;
  EvalModeScope eval(b);
  NoGradGuard no_grad;
  Rng rng(options.seed);

  Shape shape{1};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  const std::size_t d = shape_numel(shape);

  try {
    for (std::size_t p = 0; p < options.probes; ++p) {
      std::vector<double> values = rng.normals(d);
      for (double& v : values) v *= options.probe_scale;
      const Tensor x(shape, std::move(values));

      const FlowResult r = b.forward(x);
      const Tensor back = b.inverse(r.output);
      double round_trip = 0.0;
      for (std::size_t i = 0; i < d; ++i) round_trip = std::max(round_trip, std::abs(back[i] - x[i]));

      const auto jac = finite_difference_jacobian([&](const Tensor& in) { return b.forward(in).output; }, x,
                                                  options.step);
      if (jac.size() != d * d) throw DimensionError("verify_bijection: forward changed the dimensionality");
      const linalg::Slogdet sd = linalg::slogdet(jac, d);
      const double log_det_error =
          sd.sign == 0.0 ? std::numeric_limits<double>::infinity() : std::abs(r.log_det[0] - sd.log_abs_det);

      report.max_round_trip_error = std::max(report.max_round_trip_error, round_trip);
      report.max_log_det_error = std::max(report.max_log_det_error, log_det_error);
      ++report.probes;
    }
  } catch (const std::exception& e) {
    report.failure = e.what();
  }
  report.passed = report.failure.empty() && report.probes == options.probes &&
                  report.max_round_trip_error < options.round_trip_tolerance &&
                  report.max_log_det_error < options.log_det_tolerance;
  return report;
}

}  // namespace mixerflow
