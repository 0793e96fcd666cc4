#include "egoassist/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egoassist/error.hpp"

namespace egoassist {

Mask::Mask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvariantViolation, "negative mask size");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

bool Mask::get(int x, int y) const noexcept {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
  return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
}

void Mask::set(int x, int y, bool on) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) {
    throw Error(ErrorCode::OutOfBounds, "mask pixel outside raster");
  }
  bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::translated(int dx, int dy) const {
  Mask out(width_, height_);
  for (int y = 0; y < height_; ++y) {
    const int ty = y + dy;
    if (ty < 0 || ty >= height_) continue;
    for (int x = 0; x < width_; ++x) {
      const int tx = x + dx;
      if (tx < 0 || tx >= width_) continue;
      if (bits_[static_cast<std::size_t>(y) * width_ + x]) {
        out.bits_[static_cast<std::size_t>(ty) * width_ + tx] = 1;
      }
    }
  }
  return out;
}

Mask Mask::rectangle(int width, int height, int x0, int y0, int x1, int y1) {
  Mask out(width, height);
  for (int y = std::max(0, y0); y <= std::min(height - 1, y1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(width - 1, x1); ++x) out.set(x, y);
  }
  return out;
}

Mask Mask::disc(int width, int height, double cx, double cy, double radius) {
  Mask out(width, height);
  const double r2 = radius * radius;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double ddx = x - cx;
      const double ddy = y - cy;
      if (ddx * ddx + ddy * ddy <= r2) out.set(x, y);
    }
  }
  return out;
}

std::vector<std::uint32_t> Mask::run_lengths() const {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const auto bit : bits_) {
    if (bit != current) {
      runs.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

Mask Mask::from_run_lengths(int width, int height, const std::vector<std::uint32_t>& runs) {
  Mask out(width, height);
  const std::uint64_t total = std::accumulate(runs.begin(), runs.end(), std::uint64_t{0});
  if (total != out.bits_.size()) {
    throw Error(ErrorCode::MalformedLine, "run lengths do not cover the mask");
  }
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (const auto run : runs) {
    std::fill_n(out.bits_.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1;
  }
  return out;
}

nlohmann::json mask_to_json(const Mask& mask) {
  return {{"width", mask.width()}, {"height", mask.height()}, {"rle", mask.run_lengths()}};
}

Mask mask_from_json(const nlohmann::json& j) {
  return Mask::from_run_lengths(j.at("width").get<int>(), j.at("height").get<int>(),
                                j.at("rle").get<std::vector<std::uint32_t>>());
}

}  // namespace egoassist
