// SPDX-License-Identifier: Apache-2.0
#include <png.h>

#include <cmath>
#include <memory>

#include "rose/error.hpp"
#include "rose/scene_io.hpp"

namespace rose::io {

namespace {

struct PngImageDeleter {
  void operator()(png_image* image) const { png_image_free(image); }
};

}  // namespace

std::uint8_t quantize(double value) {
  if (!(value > 0.0)) return 0;
  if (value >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(value * 255.0 + 0.5));
}

double dequantize(std::uint8_t byte) { return static_cast<double>(byte) / 255.0; }

void save_png(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw FormatError("save_png: unsupported channel count " + std::to_string(image.channels));
  }
  if (image.width < 1 || image.height < 1) throw FormatError("save_png: empty image");
  std::vector<std::uint8_t> bytes(image.pixel_count() * 3);
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const int src = image.channels == 1 ? 0 : c;
      bytes[p * 3 + c] = quantize(image.pixels[p * image.channels + src]);
    }
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IoError("cannot write " + path.string() + ": " + message);
  }
}

Image load_png(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing image " + path.string());
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  std::unique_ptr<png_image, PngImageDeleter> guard(&png);
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot read " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    throw IoError("cannot decode " + path.string() + ": " + png.message);
  }
  Image image(static_cast<int>(png.width), static_cast<int>(png.height), 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels[i] = dequantize(bytes[i]);
  return image;
}

}  // namespace rose::io
