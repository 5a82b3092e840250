#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixerflow/data/pnm.hpp"
#include "mixerflow/model/flow_model.hpp"
#include "mixerflow/train/checks.hpp"

namespace mixerflow {

/// Model samples [n, ch, h, w] in [0, 1) clamped and quantized to bytes.
std::vector<RawImage> quantize_samples(const Tensor& samples, int levels = 256);
/// Tiles equally sized images row by row on a ceil(sqrt(n)) column grid; empty cells are black.
RawImage make_grid(const std::vector<RawImage>& images);

struct SampleFiles {
  std::vector<std::filesystem::path> images;
  std::filesystem::path grid;
};

/// Writes sample_<i>.pgm/.ppm and grid.pgm/.ppm into out_dir.
SampleFiles write_samples(FlowModel& model, std::size_t count, std::uint64_t seed, const std::filesystem::path& out_dir);

struct TrainOptions {
  std::filesystem::path config;
  std::optional<std::string> data_dir;
  std::optional<std::uint64_t> steps;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> shuffle;
  std::optional<std::string> out_dir;
};

// Each command prints its report to `out` and returns the process exit status.
int train_command(const TrainOptions& options, std::ostream& out);
int eval_command(const std::filesystem::path& checkpoint, const std::optional<std::string>& data_dir,
                 const std::string& split, std::ostream& out);
int sample_command(const std::filesystem::path& checkpoint, std::size_t count, std::uint64_t seed,
                   const std::filesystem::path& out_dir, std::ostream& out);
int check_command(const std::string& scope, std::ostream& out);
int gradcheck_command(const std::filesystem::path& config, std::ostream& out);

}  // namespace mixerflow
