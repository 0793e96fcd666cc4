#include "egoassist/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "egoassist/error.hpp"

namespace egoassist {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw Error(ErrorCode::InvariantViolation, "negative image size");
  }
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  if (!contains(x, y)) throw Error(ErrorCode::OutOfBounds, "pixel outside image");
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::set(int x, int y, Rgb color) {
  if (!contains(x, y)) throw Error(ErrorCode::OutOfBounds, "pixel outside image");
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = color.r;
  pixels_[i + 1] = color.g;
  pixels_[i + 2] = color.b;
}

void fill_disc(Image& image, double cx, double cy, double radius, Rgb color) {
  if (radius < 0) return;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(image.width() - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(image.height() - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      if (dx * dx + dy * dy <= r2) image.set(x, y, color);
    }
  }
}

std::size_t count_color(const Image& image, Rgb color) {
  std::size_t n = 0;
  const auto& px = image.bytes();
  for (std::size_t i = 0; i + 2 < px.size(); i += 3) {
    if (px[i] == color.r && px[i + 1] == color.g && px[i + 2] == color.b) ++n;
  }
  return n;
}

Image decode_png(std::string_view data) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data.data(), data.size())) {
    throw Error(ErrorCode::MalformedReply, std::string("png: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, image.bytes().data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw Error(ErrorCode::MalformedReply, "png: " + message);
  }
  return image;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.bytes().data(), 0, nullptr)) {
    throw Error(ErrorCode::InvariantViolation, std::string("png encode: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.bytes().data(), 0, nullptr)) {
    throw Error(ErrorCode::InvariantViolation, std::string("png encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image load_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingImage, path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(data);
  } catch (const Error& e) {
    throw Error(ErrorCode::MissingImage, path.string() + " (" + e.detail() + ")");
  }
}

void save_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace egoassist
