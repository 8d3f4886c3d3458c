#include "dmnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace dmnet {
namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes, int h,
               int w, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

Tensorf load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  auto img = Tensorf::zeros(Shape(1, 3, h, w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        img.at(0, c, y, x) = bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
      }
  return img;
}

void save_png(const std::filesystem::path& path, const Tensorf& img, int index) {
  const Shape& s = img.shape();
  if (s.c() != 3) throw ShapeError("save_png: expected 3 channels, got " + std::to_string(s.c()));
  if (index < 0 || index >= s.n()) throw std::out_of_range("save_png: sample index out of range");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(s.h()) * s.w() * 3);
  for (int y = 0; y < s.h(); ++y)
    for (int x = 0; x < s.w(); ++x)
      for (int c = 0; c < 3; ++c) {
        bytes[(static_cast<std::size_t>(y) * s.w() + x) * 3 + c] = to_byte(img.at(index, c, y, x));
      }
  write_png(path, bytes, s.h(), s.w(), PNG_FORMAT_RGB);
}

void save_gray_png(const std::filesystem::path& path, std::span<const float> values, int h, int w) {
  if (values.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("save_gray_png: value count does not match h*w");
  }
  std::vector<std::uint8_t> bytes(values.size());
  std::transform(values.begin(), values.end(), bytes.begin(), to_byte);
  write_png(path, bytes, h, w, PNG_FORMAT_GRAY);
}

Tensorf quantize_8bit(const Tensorf& img) {
  auto out = img.clone();
  out.set_requires_grad(false);
  for (float& v : out.data()) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace dmnet
