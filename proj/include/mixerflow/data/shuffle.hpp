#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mixerflow/data/dataset.hpp"
#include "mixerflow/layers/geometry.hpp"

namespace mixerflow {

enum class ShuffleKind { identity, local, global };

ShuffleKind parse_shuffle_kind(const std::string& name);
std::string to_string(ShuffleKind kind);

/// A fixed pixel permutation applied identically to every image: out[i] = in[permutation[i]]
/// over flat [ch, h, w] indices.
class ShuffleSpec {
 public:
  static ShuffleSpec identity(const PatchGeometry& geometry);
  /// One within-patch permutation shared by all patches, then one permutation of patch positions.
  static ShuffleSpec local(const PatchGeometry& geometry, std::uint64_t seed);
  /// One permutation of all pixels.
  static ShuffleSpec global(const PatchGeometry& geometry, std::uint64_t seed);
  static ShuffleSpec make(ShuffleKind kind, const PatchGeometry& geometry, std::uint64_t seed);

  ShuffleKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const PatchGeometry& geometry() const { return geometry_; }
  const std::vector<std::size_t>& permutation() const { return permutation_; }
  const std::vector<std::size_t>& inverse_permutation() const { return inverse_; }
  /// Local kind only: out slot j of every patch reads in slot within_patch()[j].
  const std::vector<std::size_t>& within_patch() const { return within_patch_; }
  /// Local kind only: out patch k is built from in patch patch_order()[k].
  const std::vector<std::size_t>& patch_order() const { return patch_order_; }

 private:
  ShuffleSpec(ShuffleKind kind, std::uint64_t seed, PatchGeometry geometry, std::vector<std::size_t> permutation);

  ShuffleKind kind_;
  std::uint64_t seed_;
  PatchGeometry geometry_;
  std::vector<std::size_t> permutation_;
  std::vector<std::size_t> inverse_;
  std::vector<std::size_t> within_patch_;
  std::vector<std::size_t> patch_order_;
};

ImageBatch apply_shuffle(const ImageBatch& batch, const ShuffleSpec& spec);
ImageBatch inverse_shuffle(const ImageBatch& batch, const ShuffleSpec& spec);
ImageDataset apply_shuffle(const ImageDataset& data, const ShuffleSpec& spec);
ImageDataset inverse_shuffle(const ImageDataset& data, const ShuffleSpec& spec);

}  // namespace mixerflow
