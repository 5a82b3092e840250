#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mixerflow/data/dataset.hpp"
#include "mixerflow/data/sampler.hpp"
#include "mixerflow/data/shuffle.hpp"
#include "mixerflow/model/flow_model.hpp"
#include "mixerflow/train/checkpoint.hpp"
#include "mixerflow/train/optimizer.hpp"
#include "mixerflow/train/run_config.hpp"

namespace mixerflow {

struct MetricRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double nll = 0.0;  // mean train NLL (nats) over the logging interval
  double bpd = 0.0;  // validation bpd with fixed dequantization noise

  std::string line() const;
};

struct EvalResult {
  double mean_bpd = 0.0;
  double stderr_bpd = 0.0;
  std::vector<double> per_sample;
};

/// Per-sample bpd over `data` (or its first `limit` images), dequantized with a noise stream
/// keyed only by `dequant_seed` and the chunk index. Runs in evaluation mode without recording.
EvalResult evaluate_bpd(FlowModel& model, const ImageDataset& data, std::uint64_t dequant_seed,
                        std::size_t chunk = 250, std::size_t limit = 0);

/// Throws ContractError unless the dataset images match the model geometry.
void check_geometry(const FlowModel& model, const ImageDataset& data);

/// Model, optimizer and step counter for one run.
class TrainingSession {
 public:
  explicit TrainingSession(RunConfig run);
  static std::unique_ptr<TrainingSession> resume(const std::filesystem::path& checkpoint_dir);

  /// Installs the data, applying the configured shuffle.
  void set_data(ImageDataset train, ImageDataset val);
  /// Loads train and val from run.data_dir.
  void load_data();

  /// Initializes ActNorm layers from the first training batch if they are not yet.
  void initialize();
  /// One optimizer step; returns the mean train NLL (nats) of the batch before the update.
  double train_step();
  /// Trains until run.steps, logging every log_every steps to <out_dir>/metrics.log and
  /// `echo`, and checkpointing to <out_dir>/checkpoint. A NumericError leaves a checkpoint
  /// in <out_dir>/failure and is rethrown.
  void run(std::ostream* echo = nullptr);

  double validation_bpd();
  ImageBatch batch_for_step(std::uint64_t step) const;

  CheckpointData snapshot();
  void save(const std::filesystem::path& dir);
  void restore(const CheckpointData& data);

  FlowModel& model() { return *model_; }
  Adam& optimizer() { return *optimizer_; }
  const RunConfig& config() const { return run_; }
  std::uint64_t step() const { return step_; }
  const std::vector<std::string>& metrics() const { return metrics_; }
  /// Train NLL of every step taken in this process.
  const std::vector<double>& step_losses() const { return step_losses_; }
  const ImageDataset& train_data() const { return train_; }
  const ImageDataset& val_data() const { return val_; }
  /// Last pre-clip gradient norm.
  double last_grad_norm() const { return last_grad_norm_; }

 private:
  std::uint64_t dequant_seed() const;
  void require_data() const;

  RunConfig run_;
  std::unique_ptr<FlowModel> model_;
  std::unique_ptr<Adam> optimizer_;
  std::optional<ShuffleSpec> shuffle_;
  ImageDataset train_;
  ImageDataset val_;
  std::unique_ptr<BatchSampler> sampler_;
  std::uint64_t step_ = 0;
  std::vector<std::string> metrics_;
  std::vector<double> step_losses_;
  double last_grad_norm_ = 0.0;
};

}  // namespace mixerflow
