#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "mixerflow/data/dataset.hpp"
#include "mixerflow/data/dequantize.hpp"
#include "mixerflow/data/loaders.hpp"
#include "mixerflow/data/pnm.hpp"
#include "mixerflow/data/sampler.hpp"
#include "mixerflow/data/shuffle.hpp"
#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/random.hpp"

using namespace mixerflow;
namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<std::uint8_t>;

void put_be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

Bytes idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  Bytes b;
  put_be32(b, 0x803);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  return b;
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

ImageBatch random_byte_batch(std::size_t n, std::size_t ch, std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> v(n * ch * h * w);
  for (double& e : v) e = static_cast<double>(rng.below(256));
  ImageBatch b{Tensor({n, ch, h, w}, v), {}, false};
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % 10));
  return b;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixerflow_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("idx image header arithmetic") {
  Bytes b = idx_images(60000, 28, 28);
  b.resize(16 + 60000 * 784, 7);
  const ImageDataset d = decode_idx_images(b);
  CHECK(d.size() == 60000);
  CHECK(d.sample_size() == 784);
  CHECK(d.height == 28);
  CHECK(d.channels == 1);
  CHECK(d.image(59999)[783] == 7);
}

TEST_CASE("idx all-zero single image") {
  Bytes b = idx_images(1, 28, 28);
  b.resize(16 + 784, 0);
  const ImageBatch batch = decode_idx_images(b).all();
  CHECK(batch.size() == 1);
  CHECK(batch.pixels.shape() == Shape{1, 1, 28, 28});
  for (double v : batch.pixels.values()) CHECK(v == 0.0);
}

TEST_CASE("idx malformed files") {
  Bytes b = idx_images(2, 28, 28);
  b.resize(16 + 784 + 100, 1);
  try {
    decode_idx_images(b);
    FAIL("expected truncation error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == b.size());
  }
  Bytes bad = b;
  bad[3] = 0x01;
  try {
    decode_idx_images(bad);
    FAIL("expected magic error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  CHECK_THROWS_AS(decode_idx_images(Bytes{0, 0, 8}), FormatError);

  Bytes labels;
  put_be32(labels, 0x801);
  put_be32(labels, 3);
  labels.insert(labels.end(), {1, 9, 0});
  CHECK(decode_idx_labels(labels) == std::vector<int>{1, 9, 0});
  labels[9] = 10;
  try {
    decode_idx_labels(labels);
    FAIL("expected label error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 9);
  }
}

TEST_CASE("first MNIST training image equals the raw byte slice") {
  const fs::path dir = MIXERFLOW_TEST_MNIST_DIR;
  const fs::path images = dir / "train-images-idx3-ubyte";
  if (!fs::exists(images)) {
    MESSAGE("MNIST files not found in " << dir << "; skipping");
    return;
  }
  const Bytes raw = read_file(images);
  const ImageDataset d = decode_idx_images(raw);
  const auto first = d.image(0);
  REQUIRE(first.size() == 784);
  std::uint64_t ours = 0;
  std::uint64_t slice = 0;
  for (std::size_t i = 0; i < 784; ++i) {
    ours = ours * 131 + first[i];
    slice = slice * 131 + raw[16 + i];
  }
  CHECK(ours == slice);

  const ImageDataset train = load_mnist(dir, DataSplit::train);
  const ImageDataset val = load_mnist(dir, DataSplit::val);
  CHECK(train.size() + val.size() == d.size());
  CHECK(val.size() == static_cast<std::size_t>(std::llround(d.size() * kValidationFraction)));
  CHECK(train.labels.size() == train.size());
}

TEST_CASE("cifar-10 records") {
  Bytes b(30730000, 0);
  for (std::size_t r = 0; r < 10000; ++r) {
    b[r * 3073] = static_cast<std::uint8_t>(r % 10);
    b[r * 3073 + 1] = static_cast<std::uint8_t>(r % 251);
  }
  b[1] = 200;
  const ImageDataset d = decode_cifar10(b);
  CHECK(d.size() == 10000);
  CHECK(d.channels == 3);
  CHECK(d.height == 32);
  CHECK(d.image(0)[0] == b[1]);
  CHECK(d.labels[13] == 3);

  Bytes bad_label(3073, 0);
  bad_label[0] = 255;
  CHECK_THROWS_AS(decode_cifar10(bad_label), FormatError);
  CHECK_THROWS_AS(decode_cifar10(Bytes(3074, 0)), FormatError);
}

TEST_CASE("pnm decoding") {
  const Bytes p5{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 255, 0};
  const RawImage img = decode_pnm(p5);
  CHECK(img.channels == 1);
  CHECK(img.width == 2);
  CHECK(img.pixels == Bytes{0, 255, 255, 0});

  const std::string p6_text = "P6\n# comment\n1 1\n255\n";
  Bytes p6(p6_text.begin(), p6_text.end());
  p6.insert(p6.end(), {10, 20, 30});
  const RawImage rgb = decode_pnm(p6);
  CHECK(rgb.channels == 3);
  CHECK(rgb.pixels == Bytes{10, 20, 30});

  const std::string low = "P5 2 1 15\n";
  Bytes scaled(low.begin(), low.end());
  scaled.insert(scaled.end(), {15, 0});
  CHECK(decode_pnm(scaled).pixels == Bytes{255, 0});

  const std::string p2 = "P2\n1 1\n255\n0\n";
  CHECK_THROWS_AS(decode_pnm(Bytes(p2.begin(), p2.end())), FormatError);
  CHECK_THROWS_AS(decode_pnm(Bytes(p5.begin(), p5.end() - 1)), FormatError);

  const Bytes encoded = encode_pnm(img);
  CHECK(encoded == p5);
}

TEST_CASE("box-filter downsampling") {
  RawImage flat{1, 4, 4, Bytes(16, 100)};
  const RawImage small = center_crop_downsample(flat, 2);
  CHECK(small.pixels == Bytes(4, 100));

  RawImage checker{1, 4, 4, {}};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) checker.pixels.push_back((x + y) % 2 ? 255 : 0);
  CHECK(center_crop_downsample(checker, 2).pixels == Bytes(4, 127));

  RawImage wide{1, 2, 4, {0, 9, 9, 0, 0, 9, 9, 0}};
  const RawImage cropped = center_crop_downsample(wide, 2);
  CHECK(cropped.pixels == Bytes{9, 9, 9, 9});
  CHECK_THROWS_AS(center_crop_downsample(flat, 8), ContractError);
}

TEST_CASE("image directory loading") {
  const fs::path dir = scratch_dir("imgdir");
  for (int i = 0; i < 10; ++i) {
    write_pnm(dir / ("img" + std::to_string(i) + ".pgm"), RawImage{1, 6, 4, Bytes(24, static_cast<std::uint8_t>(i * 20))});
  }
  const ImageDataset train = load_image_dir(dir, 2, DataSplit::train);
  const ImageDataset val = load_image_dir(dir, 2, DataSplit::val);
  CHECK(train.size() == 9);
  CHECK(val.size() == 1);
  CHECK(train.height == 2);
  CHECK(train.width == 2);
  CHECK_THROWS_AS(load_image_dir(dir, 2, DataSplit::test), ContractError);
  fs::remove_all(dir);
}

TEST_CASE("dequantization ranges and determinism") {
  ImageBatch b{Tensor({1, 1, 1, 4}, {0, 255, 0, 255}), {}, false};
  const ImageBatch y = dequantize(b, 256, 3, 0);
  CHECK(y.dequantized);
  CHECK(y.pixels[0] >= 0.0);
  CHECK(y.pixels[0] < 1.0 / 256);
  CHECK(y.pixels[1] >= 255.0 / 256);
  CHECK(y.pixels[1] < 1.0);
  CHECK(as_vector(dequantize(b, 256, 3, 0).pixels) == as_vector(y.pixels));
  CHECK(as_vector(dequantize(b, 256, 3, 1).pixels) != as_vector(y.pixels));
  CHECK_THROWS_AS(dequantize(y, 256, 3, 0), ContractError);
  CHECK_THROWS_AS(dequantize(ImageBatch{Tensor({1, 1, 1, 1}, {256}), {}, false}, 256, 0), ContractError);

  Rng rng(4);
  const ImageBatch many = random_byte_batch(20, 1, 8, 8, rng);
  const ImageBatch dq = dequantize(many, 256, 9, 2);
  for (std::size_t i = 0; i < many.pixels.numel(); ++i) {
    CHECK(std::floor(dq.pixels[i] * 256) == many.pixels[i]);
  }
}

TEST_CASE("identity and round-trip shuffles") {
  const PatchGeometry g{8, 8, 1, 2, 2};
  Rng rng(5);
  const ImageBatch b = random_byte_batch(10, 1, 8, 8, rng);
  CHECK(as_vector(apply_shuffle(b, ShuffleSpec::identity(g)).pixels) == as_vector(b.pixels));
  for (std::uint64_t seed : {1, 2, 3, 77}) {
    for (const ShuffleSpec& spec : {ShuffleSpec::local(g, seed), ShuffleSpec::global(g, seed)}) {
      const ImageBatch s = apply_shuffle(b, spec);
      CHECK(s.labels == b.labels);
      CHECK(as_vector(inverse_shuffle(s, spec).pixels) == as_vector(b.pixels));
      auto a = as_vector(s.pixels);
      auto o = as_vector(b.pixels);
      std::sort(a.begin(), a.end());
      std::sort(o.begin(), o.end());
      CHECK(a == o);
    }
  }
  CHECK_THROWS_AS(apply_shuffle(b, ShuffleSpec::global(PatchGeometry{4, 4, 1, 2, 2}, 1)), ContractError);
}

TEST_CASE("local shuffle is a two-stage composition") {
  const PatchGeometry g{4, 4, 1, 2, 2};
  const ShuffleSpec spec = ShuffleSpec::local(g, 12);
  const auto& within = spec.within_patch();
  const auto& order = spec.patch_order();
  REQUIRE(within.size() == 4);
  REQUIRE(order.size() == 4);

  // Flat pixel index of slot j (row-major in the patch) of patch k (raster order).
  const auto pixel = [](std::size_t k, std::size_t j) { return (k / 2 * 2 + j / 2) * 4 + (k % 2) * 2 + j % 2; };
  std::vector<std::size_t> expected(16);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 4; ++j) expected[pixel(k, j)] = pixel(order[k], within[j]);
  CHECK(spec.permutation() == expected);

  // Every output patch reads exactly one input patch.
  for (std::size_t k = 0; k < 4; ++k) {
    std::set<std::size_t> sources;
    for (std::size_t j = 0; j < 4; ++j) {
      const std::size_t src = spec.permutation()[pixel(k, j)];
      sources.insert((src / 4) / 2 * 2 + (src % 4) / 2);
    }
    CHECK(sources.size() == 1);
  }

  const ShuffleSpec global = ShuffleSpec::global(g, 12);
  std::vector<bool> seen(16, false);
  for (std::size_t v : global.permutation()) seen.at(v) = true;
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));
}

TEST_CASE("seeded train/val split") {
  const SplitIndices s = split_indices(1000, 0.1, 42);
  CHECK(s.val.size() == 100);
  CHECK(s.train.size() == 900);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 1000; ++i) CHECK(all[i] == i);
  CHECK(split_indices(1000, 0.1, 42).val == s.val);
  CHECK(split_indices(1000, 0.1, 43).val != s.val);
}

TEST_CASE("batch sampler") {
  BatchSampler a(100, 32, 5);
  BatchSampler b(100, 32, 5);
  CHECK(a.batches_per_epoch() == 3);
  std::set<std::size_t> epoch;
  for (std::uint64_t step = 0; step < 3; ++step) {
    const auto idx = a.indices(step);
    CHECK(idx.size() == 32);
    CHECK(idx == b.indices(step));
    epoch.insert(idx.begin(), idx.end());
  }
  CHECK(epoch.size() == 96);
  CHECK(a.indices(3) != a.indices(0));
  CHECK(a.indices(0) == BatchSampler(100, 32, 5).indices(0));
  CHECK_THROWS_AS(BatchSampler(10, 32, 1), ContractError);
}
