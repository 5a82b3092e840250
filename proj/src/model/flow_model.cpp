#include "mixerflow/model/flow_model.hpp"

#include <cstring>
#include <string>

#include "mixerflow/layers/actnorm.hpp"
#include "mixerflow/layers/geometry.hpp"
#include "mixerflow/layers/shift.hpp"
#include "mixerflow/model/mixer_layer.hpp"
#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

const MixerFlowConfig& validated(const MixerFlowConfig& config) {
  config.validate();
  return config;
}

}  // namespace

FlowModel::FlowModel(const MixerFlowConfig& config)
    : FlowChain(""), config_(validated(config)), base_(config.geometry.dims()) {
  const PatchGeometry& g = config_.geometry;
  Rng rng(config_.seed);
  conv_ = &append(std::make_unique<Conv1x1>("input_conv", g, LinearMode::lu));
  append(std::make_unique<Patchify>("patchify", g));
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    const std::string name = "layer." + std::to_string(i);
    const bool shifted = config_.enable_shift_layers && (i + 1) % config_.shift_every == 0;
    if (shifted) {
      append(std::make_unique<ShiftLayer>(
          name, g, config_.shift_h, config_.shift_w,
          [&](const std::string& path, const PatchGeometry& inner) -> std::unique_ptr<Bijection> {
            return std::make_unique<MixerLayer>(path, inner, config_, rng);
          }));
    } else {
      append(std::make_unique<MixerLayer>(name, g, config_, rng));
    }
  }
  append(std::make_unique<Flatten>("flatten", g.mixer_shape()));
}

void FlowModel::initialize(const Tensor& batch) {
  DataInitScope init;
  NoGradGuard no_grad;
  forward(batch);
}

void FlowModel::force_actnorm_identity() {
  visit([](Bijection& b) {
    if (auto* an = dynamic_cast<ActNorm*>(&b)) an->set_identity();
  });
}

std::uint64_t FlowModel::checksum() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Parameter* p : parameters()) {
    for (double v : p->value.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

DensityResult FlowModel::log_likelihood(const Tensor& x) {
  return mixerflow::log_likelihood(*this, base_, x, config_.dequant_levels);
}

Tensor FlowModel::sample(std::size_t n, std::uint64_t seed) { return mixerflow::sample(*this, base_, n, seed); }

std::unique_ptr<FlowModel> build_model(const MixerFlowConfig& config) { return std::make_unique<FlowModel>(config); }

GradientCheckReport check_model_gradients(FlowModel& model, const Tensor& batch, const GradientCheckOptions& options) {
  if (!model.initialized()) {
    throw InitializationError("gradient check: model has uninitialized ActNorm layers; initialize it first");
  }
  const auto params = model.parameters();
  return check_gradients(params, [&] { return negate(mean(model.log_likelihood(batch).log_prob)); }, options);
}

}  // namespace mixerflow
