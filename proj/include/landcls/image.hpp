#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace landcls {

// 8-bit RGB raster, interleaved, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) noexcept { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const noexcept {
    return pixels[(y * width + x) * 3 + c];
  }

  bool operator==(const Image&) const = default;
};

struct ImageInfo {
  std::size_t width = 0;
  std::size_t height = 0;
};

// PNG or JPEG, detected from the file signature. Throws IoError on
// unreadable or undecodable files.
Image decode_image(const std::string& path);
// Reads only the header.
ImageInfo probe_image(const std::string& path);

void write_png(const Image& image, const std::string& path);
void write_jpeg(const Image& image, const std::string& path, int quality = 95);

// Centered crop to S x S with S = min(width, height). With an odd excess the
// extra pixel is dropped from the right (landscape) or bottom (portrait).
Image square_crop(const Image& image);

// Bilinear resize of a square image to target x target with half-pixel
// centers: src = (dst + 0.5) * in / out - 0.5, clamped to the border.
Image resize_bilinear(const Image& image, std::size_t target);

Image flip_horizontal(const Image& image);

// Rotation about the image center, bilinear resampling, edge replication.
Image rotate(const Image& image, double degrees);

struct AugmentConfig {
  bool enabled = false;
  bool horizontal_flip = true;
  double rotation_degrees = 10.0;
  std::uint64_t seed = 0;
  // Add one augmented copy per training image instead of augmenting on the fly.
  bool materialize = false;
};

// Deterministic in (config.seed, sample_key): flips with probability 0.5
// and rotates by a uniform angle in [-rotation_degrees, rotation_degrees].
Image augment(const Image& image, const AugmentConfig& config, std::uint64_t sample_key);

}  // namespace landcls
