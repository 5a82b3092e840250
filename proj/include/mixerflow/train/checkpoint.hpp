#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixerflow/substrate/tensor.hpp"
#include "mixerflow/train/run_config.hpp"

namespace mixerflow {

inline constexpr int kCheckpointFormatVersion = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// In-memory image of a checkpoint directory:
///   manifest.txt  key = value lines (format version, step, seed, config echo, metric history)
///   index.txt     one "name shape precision offset" line per tensor
///   blobs.bin     the tensors back to back as little-endian f64
struct CheckpointData {
  RunConfig run;
  std::uint64_t step = 0;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::string> metrics;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& dir, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& dir);

}  // namespace mixerflow
