#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "curvyilt/errors.hpp"

namespace curvyilt {

// Raster geometry: pixel extents plus the physical pitch in nm per pixel.
struct GridSpec {
  int width_px = 0;
  int height_px = 0;
  double nm_per_px = 1.0;

  void validate() const {
    if (width_px <= 0 || height_px <= 0)
      throw ValidationError("GridSpec: extents must be positive");
    if (!(nm_per_px > 0.0) || !std::isfinite(nm_per_px))
      throw ValidationError("GridSpec: nm_per_px must be positive and finite");
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_px) * static_cast<std::size_t>(height_px);
  }

  bool operator==(const GridSpec&) const = default;
};

// Real-valued image, row-major. Values are typically in [0,1]; the mask
// variable of the optimizer is the one deliberate exception.
struct GrayImage {
  GridSpec spec;
  std::vector<double> data;

  GrayImage() = default;
  explicit GrayImage(GridSpec s, double fill = 0.0) : spec(s), data() {
    spec.validate();
    data.assign(spec.pixel_count(), fill);
  }

  int width() const { return spec.width_px; }
  int height() const { return spec.height_px; }

  double& operator()(int y, int x) {
    return data[static_cast<std::size_t>(y) * spec.width_px + x];
  }
  double operator()(int y, int x) const {
    return data[static_cast<std::size_t>(y) * spec.width_px + x];
  }
};

// Image with entries that are exactly 0 or 1.
struct BinaryImage {
  GridSpec spec;
  std::vector<std::uint8_t> data;

  BinaryImage() = default;
  explicit BinaryImage(GridSpec s, std::uint8_t fill = 0) : spec(s), data() {
    spec.validate();
    data.assign(spec.pixel_count(), fill);
  }

  int width() const { return spec.width_px; }
  int height() const { return spec.height_px; }

  std::uint8_t& operator()(int y, int x) {
    return data[static_cast<std::size_t>(y) * spec.width_px + x];
  }
  std::uint8_t operator()(int y, int x) const {
    return data[static_cast<std::size_t>(y) * spec.width_px + x];
  }

  GrayImage to_gray() const {
    GrayImage g(spec);
    for (std::size_t i = 0; i < data.size(); ++i) g.data[i] = data[i];
    return g;
  }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b)) throw DimensionError(std::string(what) + ": grid mismatch");
}

inline double sum(const GrayImage& img) {
  double s = 0.0;
  for (double v : img.data) s += v;
  return s;
}

inline double l2_norm(const GrayImage& img) {
  double s = 0.0;
  for (double v : img.data) s += v * v;
  return std::sqrt(s);
}

inline bool all_finite(const GrayImage& img) {
  for (double v : img.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace curvyilt
