#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace egoassist {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major, no padding.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb color);

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }
  std::vector<std::uint8_t>& bytes() noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Fills every pixel whose center lies within `radius` of (cx, cy).
void fill_disc(Image& image, double cx, double cy, double radius, Rgb color);

std::size_t count_color(const Image& image, Rgb color);

Image load_png(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::string_view data);

}  // namespace egoassist
