#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mixerflow/layers/dense.hpp"

namespace mixerflow {

enum class DegreeAssignment { random, sequential };

struct MadeOptions {
  std::vector<std::size_t> hidden{128};
  DegreeAssignment degrees = DegreeAssignment::random;
  std::uint64_t mask_seed = 0;
  GeluKind gelu = GeluKind::exact;
};

/// Masked MLP over [n, D] whose outputs (s_raw_i, t_i) depend only on inputs x_j with j < i.
/// Output layout: [s_raw_1..s_raw_D, t_1..t_D]. The output layer starts at zero.
class MadeNetwork : public Module {
 public:
  MadeNetwork(std::string path, std::size_t inputs, const MadeOptions& options, Rng& rng);

  Tensor operator()(const Tensor& x) const;

  std::size_t inputs() const { return inputs_; }
  /// Degrees per layer: inputs first, then each hidden layer, then the outputs.
  const std::vector<std::vector<std::size_t>>& degrees() const { return degrees_; }
  std::vector<Dense*>& layers() { return layers_; }

 private:
  std::size_t inputs_;
  GeluKind gelu_;
  std::vector<std::vector<std::size_t>> degrees_;
  std::vector<Dense*> layers_;
};

}  // namespace mixerflow
