#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixerflow/data/dataset.hpp"
#include "mixerflow/data/pnm.hpp"

namespace mixerflow {

enum class DataSplit { train, val, test };
enum class DatasetKind { mnist, cifar10, image_dir };

DataSplit parse_split(const std::string& name);
std::string to_string(DataSplit split);
DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);

inline constexpr double kValidationFraction = 0.1;
inline constexpr std::uint64_t kDefaultSplitSeed = 20240611;

// Raw decoders. Each raises FormatError carrying the offending byte offset.
ImageDataset decode_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes);
ImageDataset decode_cifar10(std::span<const std::uint8_t> bytes);

/// Center-crops to a square and box-filters down to target×target. Block averages are
/// truncated toward zero.
RawImage center_crop_downsample(const RawImage& image, std::size_t target);

/// MNIST from IDX files. train and val are a seeded 90/10 partition of the training files;
/// test reads the t10k files.
ImageDataset load_mnist(const std::filesystem::path& dir, DataSplit split, std::uint64_t split_seed = kDefaultSplitSeed);
/// CIFAR-10 binary batches: data_batch_<k>.bin for train/val (partitioned like MNIST), test_batch.bin for test.
ImageDataset load_cifar10(const std::filesystem::path& dir, DataSplit split, std::uint64_t split_seed = kDefaultSplitSeed);
/// Every file in `dir` (sorted by name) decoded as P5/P6, cropped and resized to `target`.
/// There is no canonical split, so test is rejected and train/val are the seeded partition.
ImageDataset load_image_dir(const std::filesystem::path& dir, std::size_t target, DataSplit split,
                            std::uint64_t split_seed = kDefaultSplitSeed);

ImageDataset load_dataset(DatasetKind kind, const std::filesystem::path& dir, DataSplit split, std::size_t image_size = 32,
                          std::uint64_t split_seed = kDefaultSplitSeed);

}  // namespace mixerflow
