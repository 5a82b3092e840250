#include "mixerflow/data/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError("header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError("expected a decimal number in the header", start);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RawImage decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a PNM file", 0);
  RawImage img;
  if (bytes[1] == '5') {
    img.channels = 1;
  } else if (bytes[1] == '6') {
    img.channels = 3;
  } else {
    throw FormatError(std::string("unsupported PNM variant P") + static_cast<char>(bytes[1]), 1);
  }
  HeaderReader header(bytes.subspan(2));
  img.width = header.number();
  img.height = header.number();
  const std::size_t maxval = header.number();
  if (img.width == 0 || img.height == 0) throw FormatError("zero image extent", 2);
  if (maxval == 0 || maxval > 255) throw FormatError("maxval must lie in 1..255", 2 + header.pos());
  // exactly one whitespace byte separates the header from the raster
  const std::size_t raster = 2 + header.pos() + 1;
  if (raster > bytes.size() || !std::isspace(bytes[raster - 1])) throw FormatError("missing raster separator", raster - 1);

  const std::size_t plane = img.height * img.width;
  const std::size_t need = plane * img.channels;
  if (bytes.size() - raster < need) throw FormatError("truncated raster", bytes.size());
  img.pixels.resize(need);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < img.channels; ++c) {
      const std::size_t at = raster + p * img.channels + c;
      std::size_t v = bytes[at];
      if (v > maxval) throw FormatError("sample exceeds maxval", at);
      if (maxval != 255) v = (v * 255 + maxval / 2) / maxval;
      img.pixels[c * plane + p] = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

RawImage read_pnm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_pnm(const RawImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractError("PNM images have 1 or 3 channels");
  const std::size_t plane = image.height * image.width;
  if (image.pixels.size() != plane * image.channels) throw ContractError("pixel count does not match the image extent");
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < image.channels; ++c) out.push_back(image.pixels[c * plane + p]);
  return out;
}

void write_pnm(const std::filesystem::path& path, const RawImage& image) { write_file(path, encode_pnm(image)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mixerflow
