#include "mixerflow/data/loaders.hpp"

#include <algorithm>
#include <string>

#include "mixerflow/data/pnm.hpp"
#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  if (at + 4 > bytes.size()) throw FormatError("truncated IDX header", bytes.size());
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) | (std::uint32_t{bytes[at + 2]} << 8) |
         std::uint32_t{bytes[at + 3]};
}

ImageDataset take_split(ImageDataset all, DataSplit split, std::uint64_t seed) {
  const auto parts = split_indices(all.size(), kValidationFraction, seed);
  return all.subset(split == DataSplit::val ? parts.val : parts.train);
}

void append(ImageDataset& into, const ImageDataset& part) {
  if (into.sample_size() == 0) {
    into = part;
    return;
  }
  into.pixels.insert(into.pixels.end(), part.pixels.begin(), part.pixels.end());
  into.labels.insert(into.labels.end(), part.labels.begin(), part.labels.end());
}

std::filesystem::path first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (std::filesystem::exists(dir / n)) return dir / n;
  throw IoError("none of the expected files found in " + dir.string() + " (looked for " + *names.begin() + ")");
}

template <class Decode>
auto decode_file(const std::filesystem::path& path, Decode decode) {
  const auto bytes = read_file(path);
  try {
    return decode(std::span<const std::uint8_t>(bytes));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

}  // namespace

DataSplit parse_split(const std::string& name) {
  if (name == "train") return DataSplit::train;
  if (name == "val") return DataSplit::val;
  if (name == "test") return DataSplit::test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::string to_string(DataSplit split) {
  switch (split) {
    case DataSplit::train: return "train";
    case DataSplit::val: return "val";
    case DataSplit::test: return "test";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "mnist") return DatasetKind::mnist;
  if (name == "cifar10") return DatasetKind::cifar10;
  if (name == "image_dir") return DatasetKind::image_dir;
  throw ConfigError("unknown dataset '" + name + "' (expected mnist, cifar10 or image_dir)");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::image_dir: return "image_dir";
  }
  return "?";
}

ImageDataset decode_idx_images(std::span<const std::uint8_t> bytes) {
  if (read_be32(bytes, 0) != kIdxImageMagic) throw FormatError("bad IDX image magic", 0);
  const std::size_t count = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  if (rows == 0 || cols == 0) throw FormatError("zero image extent", 8);
  const std::size_t need = 16 + count * rows * cols;
  if (bytes.size() < need) throw FormatError("truncated IDX image data", bytes.size());
  ImageDataset ds;
  ds.channels = 1;
  ds.height = rows;
  ds.width = cols;
  ds.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(need));
  return ds;
}

std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  if (read_be32(bytes, 0) != kIdxLabelMagic) throw FormatError("bad IDX label magic", 0);
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() < 8 + count) throw FormatError("truncated IDX label data", bytes.size());
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    labels[i] = bytes[8 + i];
    if (labels[i] > 9) throw FormatError("label " + std::to_string(labels[i]) + " outside 0..9", 8 + i);
  }
  return labels;
}

ImageDataset decode_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecord != 0)
    throw FormatError("file size " + std::to_string(bytes.size()) + " is not a multiple of the 3073-byte record",
                      bytes.size() - bytes.size() % kCifarRecord);
  const std::size_t n = bytes.size() / kCifarRecord;
  ImageDataset ds;
  ds.channels = 3;
  ds.height = kCifarSide;
  ds.width = kCifarSide;
  ds.pixels.reserve(n * (kCifarRecord - 1));
  ds.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t at = r * kCifarRecord;
    if (bytes[at] > 9) throw FormatError("label " + std::to_string(bytes[at]) + " outside 0..9", at);
    ds.labels.push_back(bytes[at]);
    ds.pixels.insert(ds.pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(at + 1),
                     bytes.begin() + static_cast<std::ptrdiff_t>(at + kCifarRecord));
  }
  return ds;
}

RawImage center_crop_downsample(const RawImage& image, std::size_t target) {
  const std::size_t side = std::min(image.height, image.width);
  if (target == 0 || target > side)
    throw ContractError("cannot resize a " + std::to_string(side) + " pixel crop to " + std::to_string(target));
  const std::size_t y0 = (image.height - side) / 2;
  const std::size_t x0 = (image.width - side) / 2;
  RawImage out;
  out.channels = image.channels;
  out.height = target;
  out.width = target;
  out.pixels.resize(image.channels * target * target);
  for (std::size_t c = 0; c < image.channels; ++c) {
    const std::uint8_t* plane = image.pixels.data() + c * image.height * image.width;
    for (std::size_t i = 0; i < target; ++i) {
      const std::size_t r0 = i * side / target, r1 = (i + 1) * side / target;
      for (std::size_t j = 0; j < target; ++j) {
        const std::size_t q0 = j * side / target, q1 = (j + 1) * side / target;
        std::size_t total = 0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t q = q0; q < q1; ++q) total += plane[(y0 + r) * image.width + x0 + q];
        out.pixels[(c * target + i) * target + j] = static_cast<std::uint8_t>(total / ((r1 - r0) * (q1 - q0)));
      }
    }
  }
  return out;
}

ImageDataset load_mnist(const std::filesystem::path& dir, DataSplit split, std::uint64_t split_seed) {
  const bool test = split == DataSplit::test;
  const auto images_path = test ? first_existing(dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"})
                                : first_existing(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
  const auto labels_path = test ? first_existing(dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"})
                                : first_existing(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
  ImageDataset ds = decode_file(images_path, decode_idx_images);
  ds.labels = decode_file(labels_path, decode_idx_labels);
  if (ds.labels.size() != ds.size())
    throw FormatError(labels_path.string() + ": " + std::to_string(ds.labels.size()) + " labels for " +
                          std::to_string(ds.size()) + " images",
                      4);
  return test ? ds : take_split(std::move(ds), split, split_seed);
}

ImageDataset load_cifar10(const std::filesystem::path& dir, DataSplit split, std::uint64_t split_seed) {
  if (split == DataSplit::test) return decode_file(first_existing(dir, {"test_batch.bin"}), decode_cifar10);
  ImageDataset all;
  for (int k = 1; k <= 5; ++k) {
    const auto path = dir / ("data_batch_" + std::to_string(k) + ".bin");
    if (!std::filesystem::exists(path)) continue;
    append(all, decode_file(path, decode_cifar10));
  }
  if (all.sample_size() == 0) throw IoError("no data_batch_<k>.bin files in " + dir.string());
  return take_split(std::move(all), split, split_seed);
}

ImageDataset load_image_dir(const std::filesystem::path& dir, std::size_t target, DataSplit split,
                            std::uint64_t split_seed) {
  if (split == DataSplit::test) throw ContractError("image directories have no test split");
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename().string()[0] != '.') files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no images in " + dir.string());

  ImageDataset all;
  for (const auto& f : files) {
    const RawImage img = center_crop_downsample(read_pnm(f), target);
    if (all.sample_size() != 0 && img.channels != all.channels)
      throw FormatError(f.string() + ": channel count differs from earlier images", 1);
    if (all.sample_size() == 0) {
      all.channels = img.channels;
      all.height = img.height;
      all.width = img.width;
    }
    all.pixels.insert(all.pixels.end(), img.pixels.begin(), img.pixels.end());
  }
  return take_split(std::move(all), split, split_seed);
}

ImageDataset load_dataset(DatasetKind kind, const std::filesystem::path& dir, DataSplit split, std::size_t image_size,
                          std::uint64_t split_seed) {
  switch (kind) {
    case DatasetKind::mnist: return load_mnist(dir, split, split_seed);
    case DatasetKind::cifar10: return load_cifar10(dir, split, split_seed);
    case DatasetKind::image_dir: return load_image_dir(dir, image_size, split, split_seed);
  }
  throw ContractError("unknown dataset kind");
}

}  // namespace mixerflow
