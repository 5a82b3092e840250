#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mixerflow/flow/verify.hpp"
#include "mixerflow/model/flow_model.hpp"
#include "mixerflow/substrate/gradcheck.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  std::string detail;

  /// "CHECK <name> PASS|FAIL <worst>"
  std::string line() const;
};

enum class CheckScope { layers, model, gradients, data, all };
CheckScope parse_check_scope(const std::string& name);

struct LayerCase {
  std::string name;
  std::unique_ptr<Bijection> layer;
  Shape sample_shape;
};

/// Small image geometries with D = 8, 16 and 48 pixels.
PatchGeometry suite_geometry(std::size_t dims);

/// Adds N(0, scale²) noise to every parameter so zero-initialized heads do something.
void perturb_parameters(Module& module, Rng& rng, double scale);

/// One instance of each layer type sized for `geometry`, with perturbed parameters and
/// initialized ActNorms. Shift layers appear only where the geometry admits a shift.
std::vector<LayerCase> layer_zoo(const PatchGeometry& geometry, std::uint64_t seed);

/// Round-trip and log-det check; the worst value is the larger of the two errors.
CheckResult check_bijection(const std::string& name, Bijection& layer, const Shape& sample_shape,
                            const VerifyOptions& options = {});

/// Small configurations shared by the checks.
MixerFlowConfig tiny_gradient_config();
MixerFlowConfig tiny_density_config();

/// Uniform [0, 1) images in the model geometry.
Tensor random_images(const PatchGeometry& geometry, std::size_t n, Rng& rng);
/// Points from a fixed two-component Gaussian mixture in the plane, shaped [n, 1, 1, 2].
Tensor synthetic_plane_batch(std::size_t n, Rng& rng);

/// Trapezoidal integral of exp(log p) over [lo, hi]² on a grid of spacing `step`, for a model
/// whose samples are [1, 1, 2] images. Evaluated in evaluation mode.
double density_mass(FlowModel& model, double lo, double hi, double step);

/// Gradient check of the mean NLL of `model` (initialized from, and evaluated on, a seeded
/// random batch) after perturbing its parameters.
GradientCheckReport model_gradient_check(FlowModel& model, std::size_t batch, const GradientCheckOptions& options);

std::vector<CheckResult> layer_checks();
std::vector<CheckResult> model_checks();
std::vector<CheckResult> gradient_checks();
std::vector<CheckResult> data_checks();
std::vector<CheckResult> run_checks(CheckScope scope);

}  // namespace mixerflow
