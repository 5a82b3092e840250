#include "mixerflow/train/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "mixerflow/data/pnm.hpp"
#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

constexpr const char* kPrecision = "f64";

std::string shape_field(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s;
}

std::uint64_t parse_u64(const std::string& v, const std::string& what) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw FormatError(what + ": bad integer '" + v + "'", 0);
  return out;
}

Shape parse_shape(const std::string& s) {
  Shape shape;
  if (s == "scalar") return shape;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    shape.push_back(parse_u64(s.substr(start, end - start), "index shape"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return shape;
}

void put_le(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_le(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{p[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

const TensorRecord* CheckpointData::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& dir, const CheckpointData& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  std::string manifest = "format_version = " + std::to_string(kCheckpointFormatVersion) + "\n";
  manifest += "step = " + std::to_string(data.step) + "\n";
  manifest += "seed = " + std::to_string(data.run.seed()) + "\n";
  manifest += "optimizer_steps = " + std::to_string(data.optimizer_steps) + "\n";
  manifest += "tensors = " + std::to_string(data.tensors.size()) + "\n";
  for (const auto& [k, v] : run_config_entries(data.run)) manifest += "config." + k + " = " + v + "\n";
  manifest += "metrics = " + std::to_string(data.metrics.size()) + "\n";
  for (std::size_t i = 0; i < data.metrics.size(); ++i) manifest += "metric." + std::to_string(i) + " = " + data.metrics[i] + "\n";

  std::string index;
  std::vector<std::uint8_t> blobs;
  for (const auto& t : data.tensors) {
    if (t.name.find_first_of(" \t\n") != std::string::npos) throw ContractError("tensor name contains whitespace: " + t.name);
    if (shape_numel(t.shape) != t.values.size()) throw ContractError("tensor " + t.name + " size does not match its shape");
    index += t.name + " " + shape_field(t.shape) + " " + kPrecision + " " + std::to_string(blobs.size()) + "\n";
    for (double v : t.values) put_le(blobs, v);
  }
  write_text(dir / "manifest.txt", manifest);
  write_text(dir / "index.txt", index);
  write_file(dir / "blobs.bin", blobs);
}

CheckpointData read_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  CheckpointData data;
  std::size_t tensor_count = 0, metric_count = 0;
  bool version_seen = false;

  std::istringstream manifest(read_text(dir / "manifest.txt"));
  std::string line;
  std::size_t offset = 0;
  while (std::getline(manifest, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("manifest.txt: expected 'key = value'", at);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "format_version") {
      if (parse_u64(value, key) != kCheckpointFormatVersion) throw FormatError("manifest.txt: unsupported format version " + value, at);
      version_seen = true;
    } else if (key == "step") {
      data.step = parse_u64(value, key);
    } else if (key == "optimizer_steps") {
      data.optimizer_steps = parse_u64(value, key);
    } else if (key == "tensors") {
      tensor_count = parse_u64(value, key);
    } else if (key == "metrics") {
      metric_count = parse_u64(value, key);
    } else if (key == "seed") {
      // echoed from the config for readers; config.seed is authoritative
    } else if (key.starts_with("config.")) {
      try {
        set_run_option(data.run, key.substr(7), value);
      } catch (const ConfigError& e) {
        throw FormatError(std::string("manifest.txt: ") + e.what(), at);
      }
    } else if (key.starts_with("metric.")) {
      data.metrics.push_back(value);
    } else {
      throw FormatError("manifest.txt: unknown key '" + key + "'", at);
    }
  }
  if (!version_seen) throw FormatError("manifest.txt: missing format_version", 0);
  if (data.metrics.size() != metric_count) throw FormatError("manifest.txt: metric count mismatch", offset);

  const auto blobs = read_file(dir / "blobs.bin");
  std::istringstream index(read_text(dir / "index.txt"));
  offset = 0;
  std::size_t expected_offset = 0;
  while (std::getline(index, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, shape, precision, blob_offset;
    if (!(fields >> name >> shape >> precision >> blob_offset)) throw FormatError("index.txt: expected 4 fields", at);
    if (precision != kPrecision) throw FormatError("index.txt: unsupported precision " + precision, at);
    TensorRecord t{name, parse_shape(shape), {}};
    const std::size_t start = parse_u64(blob_offset, "index offset");
    if (start != expected_offset) throw FormatError("index.txt: blobs are not contiguous at " + name, at);
    const std::size_t n = shape_numel(t.shape);
    if (start + 8 * n > blobs.size()) throw FormatError("blobs.bin: truncated while reading " + name, blobs.size());
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = get_le(blobs.data() + start + 8 * i);
    expected_offset = start + 8 * n;
    data.tensors.push_back(std::move(t));
  }
  if (data.tensors.size() != tensor_count) throw FormatError("index.txt: tensor count mismatch", offset);
  if (expected_offset != blobs.size()) throw FormatError("blobs.bin: trailing bytes", expected_offset);
  return data;
}

}  // namespace mixerflow
