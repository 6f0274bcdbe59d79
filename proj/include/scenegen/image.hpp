#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scenegen/error.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

// Planar C x H x W real-valued image. Decoded images live nominally in
// [0,1]; sampler latents are unbounded.
struct ImageBuffer {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  int plane() const noexcept { return height * width; }

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  bool same_shape(const ImageBuffer& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool all_finite() const noexcept {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* where) {
  if (!a.same_shape(b))
    throw Error(Errc::shape_mismatch, std::string(where) + ": " + a.shape_str() + " vs " + b.shape_str());
}

inline ImageBuffer gaussian_like(const ImageBuffer& shape, Rng& rng) {
  ImageBuffer out(shape.channels, shape.height, shape.width);
  for (auto& v : out.data) v = rng.normal();
  return out;
}

inline double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline double l2_distance(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Round-trip through 8-bit storage: clamp to [0,1], quantize to 1/255 steps.
inline std::uint8_t to_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

inline ImageBuffer quantize_u8(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (auto& v : out.data) v = to_u8(v) / 255.0;
  return out;
}

}  // namespace scenegen
