#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace evsal {

/// Row-major single-channel real image.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), values(w * h, fill) {}
  Image(std::size_t w, std::size_t h, std::vector<double> v)
      : width(w), height(h), values(std::move(v)) {}

  double& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

// PFM greyscale ("Pf"), little-endian (scale -1.0), rows stored bottom-up
// as the format requires. Values are narrowed to 32-bit floats on write.
Image read_pfm(const std::filesystem::path& path);
void write_pfm(const Image& image, const std::filesystem::path& path);

// Binary PGM ("P5"), 8-bit; values map to [0, 1] as v / 255.
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const Image& image, const std::filesystem::path& path);

/// Dispatches on extension: .pfm or .pgm.
Image read_map(const std::filesystem::path& path);

}  // namespace evsal
