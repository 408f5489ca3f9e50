#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "evsal/binary_io.hpp"
#include "evsal/error.hpp"
#include "evsal/image.hpp"

namespace evsal {

namespace {

// Netpbm-style header tokenizer: whitespace separated, '#' starts a comment.
class HeaderParser {
 public:
  HeaderParser(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::string token() {
    skip_space_and_comments();
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) {
      tok.push_back(static_cast<char>(bytes_[pos_++]));
    }
    if (tok.empty()) fail("truncated header");
    return tok;
  }

  long integer() {
    const std::string tok = token();
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size()) fail("bad integer '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad integer '" + tok + "'");
    }
  }

  double real() {
    const std::string tok = token();
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail("bad number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + tok + "'");
    }
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing raster separator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::BadFormat, path_.string() + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

Image read_pfm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  HeaderParser header(bytes, path);
  if (header.token() != "Pf") throw Error(ErrorKind::BadMagic, path.string() + ": not a greyscale PFM");
  const long w = header.integer();
  const long h = header.integer();
  const double scale = header.real();
  if (w < 1 || h < 1) header.fail("bad dimensions");
  const bool little = scale < 0;
  const std::size_t start = header.raster_start();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - start < n * 4) throw Error(ErrorKind::TruncatedFile, path.string());

  Image img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  const std::uint8_t* p = bytes.data() + start;
  for (std::size_t row = 0; row < img.height; ++row) {
    const std::size_t y = img.height - 1 - row;
    for (std::size_t x = 0; x < img.width; ++x, p += 4) {
      std::uint32_t bits = little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                                     std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24)
                                  : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 |
                                     std::uint32_t{p[1]} << 16 | std::uint32_t{p[0]} << 24);
      img(y, x) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return img;
}

void write_pfm(const Image& image, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes("Pf\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
              "\n-1.0\n");
  for (std::size_t row = 0; row < image.height; ++row) {
    const std::size_t y = image.height - 1 - row;
    for (std::size_t x = 0; x < image.width; ++x) {
      w.put<float>(static_cast<float>(image(y, x)));
    }
  }
  write_file_atomic(path, w.bytes());
}

Image read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  HeaderParser header(bytes, path);
  if (header.token() != "P5") throw Error(ErrorKind::BadMagic, path.string() + ": not a binary PGM");
  const long w = header.integer();
  const long h = header.integer();
  const long maxval = header.integer();
  if (w < 1 || h < 1) header.fail("bad dimensions");
  if (maxval < 1 || maxval > 255) header.fail("only 8-bit PGM is supported");
  const std::size_t start = header.raster_start();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - start < n) throw Error(ErrorKind::TruncatedFile, path.string());

  Image img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < n; ++i) {
    img.values[i] = static_cast<double>(bytes[start + i]) / 255.0;
  }
  return img;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes("P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
              "\n255\n");
  for (double v : image.values) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
  }
  write_file_atomic(path, w.bytes());
}

Image read_map(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".pgm") return read_pgm(path);
  throw Error(ErrorKind::BadFormat, path.string() + ": expected .pfm or .pgm");
}

}  // namespace evsal
