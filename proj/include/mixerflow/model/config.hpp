#pragma once

#include <cstddef>
#include <cstdint>

#include "mixerflow/layers/coupling.hpp"
#include "mixerflow/layers/geometry.hpp"
#include "mixerflow/layers/lu_matrix.hpp"
#include "mixerflow/layers/made.hpp"

namespace mixerflow {

enum class CouplingKind { mlp_affine, maf };

struct MixerFlowConfig {
  PatchGeometry geometry{32, 32, 3, 4, 4};
  std::size_t n_layers = 30;
  std::size_t flows_per_stage = 4;
  std::size_t hidden_dim = 128;
  std::size_t patch_hidden_dim = 0;  // 0 means "same as hidden_dim"
  std::size_t shift_every = 4;
  std::size_t shift_h = 1;
  std::size_t shift_w = 1;
  LinearMode linear_mode = LinearMode::lu;
  CouplingKind coupling_kind = CouplingKind::mlp_affine;
  ScaleLaw scale_law = ScaleLaw::exp;
  bool enable_linear_blocks = true;
  bool enable_shift_layers = true;
  bool enable_couplings = true;
  bool conditioner_norm = true;
  GeluKind gelu = GeluKind::exact;
  DegreeAssignment made_degrees = DegreeAssignment::random;
  int dequant_levels = 256;
  double actnorm_min_std = 0.0;  // floor on the std used by ActNorm data initialization
  std::uint64_t seed = 0;

  std::size_t channel_hidden() const { return hidden_dim; }
  std::size_t patch_hidden() const { return patch_hidden_dim == 0 ? hidden_dim : patch_hidden_dim; }
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

const char* to_string(LinearMode mode);
const char* to_string(CouplingKind kind);
const char* to_string(ScaleLaw law);
const char* to_string(GeluKind kind);
const char* to_string(DegreeAssignment degrees);

}  // namespace mixerflow
