#include "mixerflow/data/shuffle.hpp"

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/substrate/random.hpp"

namespace mixerflow {

namespace {

std::vector<std::size_t> invert(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size()) throw ContractError("not a permutation");
    inv[perm[i]] = i;
  }
  return inv;
}

void check_shape(const PatchGeometry& g, std::size_t ch, std::size_t h, std::size_t w) {
  if (ch != g.channels || h != g.height || w != g.width)
    throw ContractError("shuffle built for " + shape_to_string(g.image_shape()) + " applied to " +
                        shape_to_string({ch, h, w}));
}

template <class T>
void permute_rows(const T* in, T* out, std::size_t rows, const std::vector<std::size_t>& index) {
  const std::size_t d = index.size();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = in[r * d + index[i]];
}

ImageBatch permute(const ImageBatch& batch, const ShuffleSpec& spec, const std::vector<std::size_t>& index) {
  const auto& s = batch.pixels.shape();
  if (s.size() != 4) throw ContractError("expected a [b, ch, h, w] batch, got " + shape_to_string(s));
  check_shape(spec.geometry(), s[1], s[2], s[3]);
  std::vector<double> out(batch.pixels.numel());
  permute_rows(batch.pixels.values().data(), out.data(), s[0], index);
  ImageBatch r;
  r.pixels = Tensor(s, std::move(out));
  r.labels = batch.labels;
  r.dequantized = batch.dequantized;
  return r;
}

ImageDataset permute(const ImageDataset& data, const ShuffleSpec& spec, const std::vector<std::size_t>& index) {
  check_shape(spec.geometry(), data.channels, data.height, data.width);
  ImageDataset r = data;
  permute_rows(data.pixels.data(), r.pixels.data(), data.size(), index);
  return r;
}

}  // namespace

ShuffleKind parse_shuffle_kind(const std::string& name) {
  if (name == "none" || name == "identity") return ShuffleKind::identity;
  if (name == "local") return ShuffleKind::local;
  if (name == "global") return ShuffleKind::global;
  throw ConfigError("unknown shuffle '" + name + "' (expected none, local or global)");
}

std::string to_string(ShuffleKind kind) {
  switch (kind) {
    case ShuffleKind::identity: return "none";
    case ShuffleKind::local: return "local";
    case ShuffleKind::global: return "global";
  }
  return "?";
}

ShuffleSpec::ShuffleSpec(ShuffleKind kind, std::uint64_t seed, PatchGeometry geometry, std::vector<std::size_t> permutation)
    : kind_(kind), seed_(seed), geometry_(geometry), permutation_(std::move(permutation)), inverse_(invert(permutation_)) {}

ShuffleSpec ShuffleSpec::identity(const PatchGeometry& geometry) {
  std::vector<std::size_t> perm(geometry.dims());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  return ShuffleSpec(ShuffleKind::identity, 0, geometry, std::move(perm));
}

ShuffleSpec ShuffleSpec::local(const PatchGeometry& geometry, std::uint64_t seed) {
  geometry.validate();
  const std::size_t np = geometry.patches(), c = geometry.patch_width();
  Rng rng(seed);
  auto within = rng.permutation(c);
  auto order = rng.permutation(np);
  const auto map = patch_index_map(geometry);
  std::vector<std::size_t> perm(geometry.dims());
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t j = 0; j < c; ++j) perm[map[k * c + j]] = map[order[k] * c + within[j]];
  ShuffleSpec spec(ShuffleKind::local, seed, geometry, std::move(perm));
  spec.within_patch_ = std::move(within);
  spec.patch_order_ = std::move(order);
  return spec;
}

ShuffleSpec ShuffleSpec::global(const PatchGeometry& geometry, std::uint64_t seed) {
  Rng rng(seed);
  return ShuffleSpec(ShuffleKind::global, seed, geometry, rng.permutation(geometry.dims()));
}

ShuffleSpec ShuffleSpec::make(ShuffleKind kind, const PatchGeometry& geometry, std::uint64_t seed) {
  switch (kind) {
    case ShuffleKind::identity: return identity(geometry);
    case ShuffleKind::local: return local(geometry, seed);
    case ShuffleKind::global: return global(geometry, seed);
  }
  throw ContractError("unknown shuffle kind");
}

ImageBatch apply_shuffle(const ImageBatch& batch, const ShuffleSpec& spec) { return permute(batch, spec, spec.permutation()); }
ImageBatch inverse_shuffle(const ImageBatch& batch, const ShuffleSpec& spec) {
  return permute(batch, spec, spec.inverse_permutation());
}
ImageDataset apply_shuffle(const ImageDataset& data, const ShuffleSpec& spec) { return permute(data, spec, spec.permutation()); }
ImageDataset inverse_shuffle(const ImageDataset& data, const ShuffleSpec& spec) {
  return permute(data, spec, spec.inverse_permutation());
}

}  // namespace mixerflow
