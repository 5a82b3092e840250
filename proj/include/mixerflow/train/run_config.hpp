#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixerflow/data/loaders.hpp"
#include "mixerflow/data/shuffle.hpp"
#include "mixerflow/model/config.hpp"

namespace mixerflow {

/// Everything needed to reproduce a training run. model.seed doubles as the run seed: it
/// drives initialization, batch order and dequantization noise.
struct RunConfig {
  MixerFlowConfig model;
  DatasetKind dataset = DatasetKind::mnist;
  std::string data_dir;
  std::size_t image_size = 32;  // image_dir datasets only
  std::uint64_t split_seed = kDefaultSplitSeed;
  std::size_t batch_size = 128;
  std::uint64_t steps = 5000;
  double lr = 1e-3;
  double lr_min = 0.0;
  double grad_clip = 5.0;
  ShuffleKind shuffle = ShuffleKind::identity;
  std::uint64_t shuffle_seed = 0;
  std::string out_dir = "run";
  std::uint64_t log_every = 100;
  std::uint64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::size_t eval_samples = 1000;        // validation subset used for the logged bpd; 0 means all
  std::uint64_t eval_seed = 7;            // fixed dequantization noise for validation

  std::uint64_t seed() const { return model.seed; }
  void validate() const;
};

/// Parses `key = value` lines. '#' starts a comment; blank lines are ignored. Unknown keys,
/// repeated keys and malformed values raise ConfigError naming the line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies one assignment (the same keys the file accepts).
void set_run_option(RunConfig& config, const std::string& key, const std::string& value);
/// Every key in a fixed order, with doubles printed in shortest round-trip form.
std::vector<std::pair<std::string, std::string>> run_config_entries(const RunConfig& config);
std::string serialize_run_config(const RunConfig& config);

std::string format_double(double v);

}  // namespace mixerflow
