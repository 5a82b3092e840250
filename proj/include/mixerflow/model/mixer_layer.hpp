#pragma once

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/model/config.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

/// One MixerFlow layer on a [b, n_p, c] mixer matrix:
///   channel stage: flows_per_stage × (LinearBlock → coupling → ActNorm) on the rows,
///   transpose, ActNorm,
///   patch stage:   flows_per_stage × (LinearBlock → coupling → ActNorm) on the columns,
///   transpose back.
/// A coupling is left out of a stage whose rows are narrower than 2.
class MixerLayer : public FlowChain {
 public:
  MixerLayer(std::string path, const PatchGeometry& geometry, const MixerFlowConfig& config, Rng& rng);

 private:
  void add_stage(const std::string& name, std::size_t rows, std::size_t width, std::size_t hidden,
                 const MixerFlowConfig& config, Rng& rng);
};

}  // namespace mixerflow
