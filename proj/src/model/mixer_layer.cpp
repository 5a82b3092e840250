#include "mixerflow/model/mixer_layer.hpp"

#include <string>

#include "mixerflow/layers/actnorm.hpp"
#include "mixerflow/layers/geometry.hpp"
#include "mixerflow/layers/linear_block.hpp"
#include "mixerflow/layers/maf.hpp"

namespace mixerflow {

MixerLayer::MixerLayer(std::string path, const PatchGeometry& geometry, const MixerFlowConfig& config, Rng& rng)
    : FlowChain(std::move(path)) {
  const std::size_t n = geometry.patches();
  const std::size_t c = geometry.patch_width();
  add_stage("channel", n, c, config.channel_hidden(), config, rng);
  append(std::make_unique<TransposeMixer>(child_path("transpose")));
  append(std::make_unique<ActNorm>(child_path("actnorm"), Shape{c, n}, config.actnorm_min_std));
  add_stage("patch", c, n, config.patch_hidden(), config, rng);
  append(std::make_unique<TransposeMixer>(child_path("untranspose")));
}

void MixerLayer::add_stage(const std::string& name, std::size_t rows, std::size_t width, std::size_t hidden,
                           const MixerFlowConfig& config, Rng& rng) {
  for (std::size_t i = 0; i < config.flows_per_stage; ++i) {
    const std::string step = child_path(name + "." + std::to_string(i));
    if (config.enable_linear_blocks) {
      append(std::make_unique<LinearBlock>(step + ".linear", width, config.linear_mode));
    }
    if (config.enable_couplings && width >= 2) {
      if (config.coupling_kind == CouplingKind::mlp_affine) {
        const ConditionerOptions options{hidden, config.conditioner_norm, config.gelu};
        append(make_affine_coupling(step + ".coupling", width, config.scale_law, options, rng));
      } else {
        MadeOptions options;
        options.hidden = {hidden, hidden};
        options.degrees = config.made_degrees;
        options.mask_seed = rng.next();
        options.gelu = config.gelu;
        append(std::make_unique<MafLayer>(step + ".maf", width, options, rng));
      }
    }
    append(std::make_unique<ActNorm>(step + ".actnorm", Shape{rows, width}, config.actnorm_min_std));
  }
}

}  // namespace mixerflow
