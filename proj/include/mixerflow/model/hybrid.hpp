#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mixerflow/layers/dense.hpp"
#include "mixerflow/model/flow_model.hpp"

namespace mixerflow {

struct HybridOptions {
  std::size_t epochs = 3;
  double lr = 1e-3;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

struct HybridMetrics {
  double loss = 0.0;  // mean cross-entropy, nats
  double accuracy = 0.0;
};

/// Linear classifier on the flattened latent z. Starts at zero, i.e. uniform logits.
class HybridHead : public Module {
 public:
  HybridHead(std::string path, std::size_t dims, std::size_t classes);

  Tensor logits(const Tensor& z) const;
  Tensor loss(const Tensor& z, std::span<const int> labels) const;
  HybridMetrics evaluate(const Tensor& z, std::span<const int> labels) const;
  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_;
  Dense* linear_;
};

struct HybridResult {
  std::unique_ptr<HybridHead> head;
  HybridMetrics train;
  std::vector<double> epoch_losses;
  std::uint64_t flow_checksum_before = 0;
  std::uint64_t flow_checksum_after = 0;
};

/// Latents of `images` under the model in evaluation mode, computed in chunks without recording.
Tensor encode(FlowModel& model, const Tensor& images, std::size_t chunk = 256);

/// Trains a head by cross-entropy on precomputed latents.
HybridResult train_head(const Tensor& latents, std::span<const int> labels, std::size_t classes,
                        const HybridOptions& options);

/// Encodes with the frozen flow, then trains the head; records the flow checksum on both sides.
HybridResult hybrid_train_head(FlowModel& model, const Tensor& images, std::span<const int> labels,
                               std::size_t classes, const HybridOptions& options);

}  // namespace mixerflow
