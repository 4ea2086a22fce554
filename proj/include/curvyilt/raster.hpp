#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "curvyilt/grid.hpp"
#include "curvyilt/layout.hpp"

namespace curvyilt {

// Pixel-center rasterization with the even-odd rule per polygon; a pixel is
// set when its center lies inside any polygon. Crossings use the half-open
// [min,max) convention so centers landing exactly on a vertex row resolve
// deterministically.
inline BinaryImage rasterize(const PolygonLayout& layout, const GridSpec& spec) {
  spec.validate();
  BinaryImage out(spec);
  if (layout.empty()) return out;

  const BoundingBoxNm bb = layout.bounding_box();
  const double grid_w_nm = spec.width_px * spec.nm_per_px;
  const double grid_h_nm = spec.height_px * spec.nm_per_px;
  if (bb.min_x < 0 || bb.min_y < 0 || bb.max_x > grid_w_nm || bb.max_y > grid_h_nm)
    throw DomainError("rasterize: layout extends outside the grid");

  std::vector<double> crossings;
  for (const auto& poly : layout.polygons) {
    const std::size_t n = poly.size();
    for (int y = 0; y < spec.height_px; ++y) {
      const double yc = (y + 0.5) * spec.nm_per_px;
      crossings.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const PointNm& a = poly[i];
        const PointNm& b = poly[(i + 1) % n];
        if (a.x != b.x) continue;  // horizontal edges never cross a scanline
        const double lo = static_cast<double>(std::min(a.y, b.y));
        const double hi = static_cast<double>(std::max(a.y, b.y));
        if (lo <= yc && yc < hi) crossings.push_back(static_cast<double>(a.x));
      }
      if (crossings.empty()) continue;
      std::sort(crossings.begin(), crossings.end());
      // inside iff an odd number of crossings lies strictly right of the center
      std::size_t passed = 0;
      for (int x = 0; x < spec.width_px; ++x) {
        const double xc = (x + 0.5) * spec.nm_per_px;
        while (passed < crossings.size() && crossings[passed] <= xc) ++passed;
        if ((crossings.size() - passed) % 2 == 1) out(y, x) = 1;
      }
    }
  }
  return out;
}

// Area-mean pooling by an integer factor; preserves pattern density.
inline GrayImage downsample(const GrayImage& img, int s) {
  if (s < 1) throw DomainError("downsample: factor must be >= 1");
  if (img.width() % s != 0 || img.height() % s != 0)
    throw DimensionError("downsample: dimensions not divisible by factor");
  GridSpec out_spec{img.width() / s, img.height() / s, img.spec.nm_per_px * s};
  GrayImage out(out_spec);
  const double inv = 1.0 / (static_cast<double>(s) * s);
  for (int y = 0; y < out_spec.height_px; ++y)
    for (int x = 0; x < out_spec.width_px; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < s; ++dy)
        for (int dx = 0; dx < s; ++dx) acc += img(y * s + dy, x * s + dx);
      out(y, x) = acc * inv;
    }
  return out;
}

namespace detail {

// Cubic convolution kernel, a = -0.5 (Catmull-Rom).
inline double bicubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct ResampleTap {
  int idx[4];
  double w[4];
};

// Per-output-sample taps for integer upscaling with the half-pixel-center
// mapping in = (out + 0.5)/s - 0.5 and clamp-to-edge borders.
inline std::vector<ResampleTap> upsample_taps(int in_n, int s) {
  std::vector<ResampleTap> taps(static_cast<std::size_t>(in_n) * s);
  for (int o = 0; o < in_n * s; ++o) {
    const double pos = (o + 0.5) / s - 0.5;
    const double base = std::floor(pos);
    ResampleTap& tap = taps[o];
    for (int j = 0; j < 4; ++j) {
      const int src = static_cast<int>(base) - 1 + j;
      tap.idx[j] = std::clamp(src, 0, in_n - 1);
      tap.w[j] = bicubic_kernel(pos - (base - 1.0 + j));
    }
  }
  return taps;
}

}  // namespace detail

// Bicubic upscale by an integer factor (separable, anti-aliased resampling
// convention: the filter widening only applies on downscale, so upscaling is
// plain bicubic). Constant images map to constant images.
inline GrayImage upsample_bicubic(const GrayImage& img, int s) {
  if (s < 1) throw DomainError("upsample_bicubic: factor must be >= 1");
  if (s == 1) return img;
  const int w = img.width(), h = img.height();
  const GridSpec out_spec{w * s, h * s, img.spec.nm_per_px / s};
  const auto xt = detail::upsample_taps(w, s);
  const auto yt = detail::upsample_taps(h, s);

  // horizontal pass
  GrayImage tmp(GridSpec{w * s, h, img.spec.nm_per_px});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w * s; ++x) {
      const auto& t = xt[x];
      tmp(y, x) = t.w[0] * img(y, t.idx[0]) + t.w[1] * img(y, t.idx[1]) +
                  t.w[2] * img(y, t.idx[2]) + t.w[3] * img(y, t.idx[3]);
    }
  // vertical pass
  GrayImage out(out_spec);
  for (int y = 0; y < h * s; ++y) {
    const auto& t = yt[y];
    for (int x = 0; x < w * s; ++x)
      out(y, x) = t.w[0] * tmp(t.idx[0], x) + t.w[1] * tmp(t.idx[1], x) +
                  t.w[2] * tmp(t.idx[2], x) + t.w[3] * tmp(t.idx[3], x);
  }
  return out;
}

// Strict threshold: 1 where value > threshold.
inline BinaryImage binarize(const GrayImage& img, double threshold) {
  BinaryImage out(img.spec);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = img.data[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace curvyilt
