#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scenegen/error.hpp"

namespace scenegen {

struct Canvas {
  int width = 512;
  int height = 512;

  double area() const noexcept { return static_cast<double>(width) * height; }
  friend bool operator==(const Canvas&, const Canvas&) = default;
};

// Pixel-space rectangle, top-left anchored. Coordinates stay real-valued
// until rasterized by box_to_mask.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const noexcept { return w * h; }
  double cx() const noexcept { return x + 0.5 * w; }
  double cy() const noexcept { return y + 0.5 * h; }
  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline bool inside(const BBox& b, const Canvas& c, double tol = 1e-9) {
  return b.w > 0 && b.h > 0 && b.x >= -tol && b.y >= -tol && b.right() <= c.width + tol &&
         b.bottom() <= c.height + tol;
}

// Shrinks oversize boxes to the canvas and shifts the rest inside it.
inline BBox clamp_box(BBox b, const Canvas& c) {
  b.w = std::min(b.w, static_cast<double>(c.width));
  b.h = std::min(b.h, static_cast<double>(c.height));
  b.x = std::clamp(b.x, 0.0, c.width - b.w);
  b.y = std::clamp(b.y, 0.0, c.height - b.h);
  return b;
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double ix = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (ix > 0 && iy > 0) ? ix * iy : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

// Maps a box between canvases of different resolution (e.g. the 512x512
// layout canvas onto a 32x32 toy image).
inline BBox scale_box(const BBox& b, const Canvas& from, const Canvas& to) {
  const double sx = static_cast<double>(to.width) / from.width;
  const double sy = static_cast<double>(to.height) / from.height;
  return {b.x * sx, b.y * sy, b.w * sx, b.h * sy};
}

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t popcount() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

// Integer pixel rectangle [x0,x1) x [y0,y1) covered by a rounded box.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Width and height round independently so the popcount is always
// round(w)*round(h); the origin shifts inward if rounding pushed the
// rectangle past the canvas edge.
inline PixelRect rasterize(const BBox& box, const Canvas& canvas) {
  const BBox b = clamp_box(box, canvas);
  const long w = std::min<long>(round_half_up(b.w), canvas.width);
  const long h = std::min<long>(round_half_up(b.h), canvas.height);
  if (w <= 0 || h <= 0)
    throw Error(Errc::degenerate_box, "box rounds to zero area (w=" + std::to_string(b.w) +
                                          ", h=" + std::to_string(b.h) + ")");
  const long x0 = std::clamp<long>(round_half_up(b.x), 0, canvas.width - w);
  const long y0 = std::clamp<long>(round_half_up(b.y), 0, canvas.height - h);
  return {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x0 + w), static_cast<int>(y0 + h)};
}

inline Mask box_to_mask(const BBox& box, const Canvas& canvas) {
  const PixelRect r = rasterize(box, canvas);
  Mask m(canvas.width, canvas.height);
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) m.at(y, x) = 1;
  return m;
}

inline Mask full_mask(int width, int height) { return Mask(width, height, 1); }

}  // namespace scenegen
