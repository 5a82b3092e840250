#include "mixerflow/substrate/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

GradientCheckReport check_gradients(std::span<Parameter* const> parameters, const std::function<Tensor()>& loss,
                                    const GradientCheckOptions& options) {
  if (!(options.step >= 1e-6 && options.step <= 1e-4)) {
    throw ContractError("check_gradients: step must lie in [1e-6, 1e-4]");
  }
  for (Parameter* p : parameters) p->value.zero_grad();
  Tensor l = loss();
  if (l.numel() != 1) throw ContractError("check_gradients: loss must be a scalar");
  const double floor = std::max(options.floor, options.noise_factor * std::numeric_limits<double>::epsilon() *
                                                  std::max(1.0, std::abs(l.item())) / options.step);
  backward(l);

  std::vector<std::pair<std::size_t, std::size_t>> elements;
  for (std::size_t p = 0; p < parameters.size(); ++p)
    for (std::size_t i = 0; i < parameters[p]->value.numel(); ++i) elements.emplace_back(p, i);
  if (options.max_elements != 0 && elements.size() > options.max_elements) {
    Rng rng(options.seed);
    auto order = rng.permutation(elements.size());
    order.resize(options.max_elements);
    std::sort(order.begin(), order.end());
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    for (auto k : order) picked.push_back(elements[k]);
    elements = std::move(picked);
  }

  std::vector<std::vector<double>> analytic;
  for (Parameter* p : parameters) analytic.push_back(p->value.grad());

  GradientCheckReport report;
  report.floor_used = floor;
  NoGradGuard no_grad;
  for (auto [p, i] : elements) {
    auto values = parameters[p]->value.mutable_values();
    const double original = values[i];
    values[i] = original + options.step;
    const double up = loss().item();
    values[i] = original - options.step;
    const double down = loss().item();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[p][i];
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    if (rel > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = std::max(rel, report.max_relative_error);
      report.worst_parameter = parameters[p]->name;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.checked > 0 && report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace mixerflow
