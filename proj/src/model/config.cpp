#include "mixerflow/model/config.hpp"

#include <string>

#include "mixerflow/layers/shift.hpp"
#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

void MixerFlowConfig::validate() const {
  try {
    geometry.validate();
  } catch (const GeometryError& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
  if (n_layers < 1) throw ConfigError("n_layers must be at least 1");
  if (flows_per_stage < 1) throw ConfigError("flows_per_stage must be at least 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be at least 1");
  if (dequant_levels < 2) throw ConfigError("dequant_levels must be at least 2");
  if (!(actnorm_min_std >= 0.0)) throw ConfigError("actnorm_min_std must be non-negative");
  if (enable_shift_layers) {
    if (shift_every < 1) throw ConfigError("shift_every must be at least 1 when shift layers are enabled");
    if (shift_h < 1 || shift_h > 2 || shift_w < 1 || shift_w > 2) throw ConfigError("shift units must be 1 or 2");
    if (shift_every <= n_layers) {
      try {
        shifted_geometry(geometry, shift_h, shift_w);
      } catch (const GeometryError& e) {
        throw ConfigError(std::string("shift layer: ") + e.what());
      }
    }
  }
}

const char* to_string(LinearMode mode) { return mode == LinearMode::lu ? "lu" : "rlu"; }
const char* to_string(CouplingKind kind) { return kind == CouplingKind::mlp_affine ? "mlp_affine" : "maf"; }
const char* to_string(ScaleLaw law) { return law == ScaleLaw::exp ? "exp" : "bounded"; }
const char* to_string(GeluKind kind) { return kind == GeluKind::exact ? "exact" : "tanh"; }
const char* to_string(DegreeAssignment degrees) {
  return degrees == DegreeAssignment::random ? "random" : "sequential";
}

}  // namespace mixerflow
