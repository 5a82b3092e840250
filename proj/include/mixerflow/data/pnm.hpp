#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mixerflow {

/// An 8-bit image in channel-planar layout (all of channel 0, then channel 1, ...).
struct RawImage {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Decodes binary P5 (gray) or P6 (RGB) with maxval <= 255. Other maxvals are rescaled to 255.
RawImage decode_pnm(std::span<const std::uint8_t> bytes);
RawImage read_pnm(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pnm(const RawImage& image);
void write_pnm(const std::filesystem::path& path, const RawImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mixerflow
