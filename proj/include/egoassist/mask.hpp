#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace egoassist {

/// Binary raster mask. Storage is one byte per pixel, row-major.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool get(int x, int y) const noexcept;
  void set(int x, int y, bool on = true);

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }
  bool same_shape(const Mask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  const std::vector<std::uint8_t>& data() const noexcept { return bits_; }

  /// Shifted copy; pixels moving past a border are dropped.
  Mask translated(int dx, int dy) const;

  static Mask rectangle(int width, int height, int x0, int y0, int x1, int y1);
  static Mask disc(int width, int height, double cx, double cy, double radius);

  /// Alternating run lengths over the row-major pixel order, starting with an
  /// unset run (which may be zero).
  std::vector<std::uint32_t> run_lengths() const;
  static Mask from_run_lengths(int width, int height, const std::vector<std::uint32_t>& runs);

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

nlohmann::json mask_to_json(const Mask& mask);
Mask mask_from_json(const nlohmann::json& j);

}  // namespace egoassist
