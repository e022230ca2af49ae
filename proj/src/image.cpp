#include "landcls/image.hpp"

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>

#include "landcls/errors.hpp"
#include "landcls/rng.hpp"

namespace landcls {

namespace {

enum class Format { png, jpeg, unknown };

Format sniff(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open");
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got >= 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return Format::png;
  if (got >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return Format::jpeg;
  return Format::unknown;
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image decode_png(const std::string& path, bool header_only, ImageInfo* info) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError(path, std::string("PNG decode failed: ") + img.message);
  }
  if (info) *info = {img.width, img.height};
  Image out;
  if (header_only) {
    png_image_free(&img);
    return out;
  }
  img.format = PNG_FORMAT_RGB;
  out = Image(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path, "PNG decode failed: " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Returns false and fills `error` on failure. No C++ objects with
// destructors live across the setjmp boundary in this function.
bool decode_jpeg_raw(std::FILE* f, bool header_only, Image* out, ImageInfo* info, char* error) {
  jpeg_decompress_struct cinfo;
  JpegError jerr;
  cinfo.err = jpeg_std_error(&jerr.mgr);
  jerr.mgr.error_exit = jpeg_fail;
  if (setjmp(jerr.jump)) {
    std::snprintf(error, JMSG_LENGTH_MAX, "%s", jerr.message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  if (info) *info = {cinfo.image_width, cinfo.image_height};
  if (!header_only) {
    jpeg_start_decompress(&cinfo);
    out->width = cinfo.output_width;
    out->height = cinfo.output_height;
    out->pixels.resize(static_cast<std::size_t>(out->width) * out->height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = out->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out->width * 3;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Image decode_jpeg(const std::string& path, bool header_only, ImageInfo* info) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError(path, "cannot open");
  Image out;
  char error[JMSG_LENGTH_MAX] = {0};
  if (!decode_jpeg_raw(f.get(), header_only, &out, info, error)) {
    throw IoError(path, std::string("JPEG decode failed: ") + error);
  }
  return out;
}

Image decode(const std::string& path, bool header_only, ImageInfo* info) {
  switch (sniff(path)) {
    case Format::png: return decode_png(path, header_only, info);
    case Format::jpeg: return decode_jpeg(path, header_only, info);
    case Format::unknown: break;
  }
  throw IoError(path, "not a PNG or JPEG file");
}

}  // namespace

Image decode_image(const std::string& path) {
  Image img = decode(path, false, nullptr);
  if (img.width == 0 || img.height == 0) throw IoError(path, "image has zero size");
  return img;
}

ImageInfo probe_image(const std::string& path) {
  ImageInfo info;
  decode(path, true, &info);
  if (info.width == 0 || info.height == 0) throw IoError(path, "image has zero size");
  return info;
}

void write_png(const Image& image, const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(path, std::string("PNG write failed: ") + img.message);
  }
}

void write_jpeg(const Image& image, const std::string& path, int quality) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError(path, "cannot open for writing");
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(image.pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

Image square_crop(const Image& image) {
  const std::size_t side = std::min(image.width, image.height);
  if (image.width == image.height) return image;
  const std::size_t x0 = (image.width - side) / 2;
  const std::size_t y0 = (image.height - side) / 2;
  Image out(side, side);
  for (std::size_t y = 0; y < side; ++y) {
    const std::uint8_t* src = image.pixels.data() + ((y0 + y) * image.width + x0) * 3;
    std::copy_n(src, side * 3, out.pixels.data() + y * side * 3);
  }
  return out;
}

namespace {

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Bilinear sample at (x, y) with coordinates clamped to the border.
double sample(const Image& img, double x, double y, std::size_t c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace

Image resize_bilinear(const Image& image, std::size_t target) {
  if (target == 0) throw ValidationError("resize target must be positive");
  if (image.width != image.height) throw ValidationError("resize expects a square image; crop first");
  if (image.width == target) return image;
  const double scale = static_cast<double>(image.width) / static_cast<double>(target);
  Image out(target, target);
  for (std::size_t y = 0; y < target; ++y) {
    const double sy = (static_cast<double>(y) + 0.5) * scale - 0.5;
    for (std::size_t x = 0; x < target; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) * scale - 0.5;
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = quantize(sample(image, sx, sy, c));
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(image.width - 1 - x, y, c) = image.at(x, y, c);
    }
  }
  return out;
}

Image rotate(const Image& image, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  Image out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      // Inverse mapping: destination pixel pulled from the source rotated by -theta.
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = quantize(sample(image, sx, sy, c));
    }
  }
  return out;
}

Image augment(const Image& image, const AugmentConfig& config, std::uint64_t sample_key) {
  if (!config.enabled) return image;
  Rng rng(derive_seed(config.seed, {sample_key}));
  const bool flip = rng.uniform() < 0.5;
  const double angle = rng.uniform(-config.rotation_degrees, config.rotation_degrees);
  Image out = (config.horizontal_flip && flip) ? flip_horizontal(image) : image;
  if (config.rotation_degrees > 0.0) out = rotate(out, angle);
  return out;
}

}  // namespace landcls
