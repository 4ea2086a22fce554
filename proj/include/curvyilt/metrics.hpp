#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "curvyilt/grid.hpp"
#include "curvyilt/layout.hpp"

namespace curvyilt {

// Per-clip quality numbers. msa/msd carry +inf sentinels when the mask has
// too few components to measure; epev is absent when no layout was supplied.
struct MetricBundle {
  double mse = 0.0;
  double pvb_nm2 = 0.0;
  std::optional<int> epev;
  double msa_nm2 = std::numeric_limits<double>::infinity();
  double msd_nm = std::numeric_limits<double>::infinity();
};

struct ComponentLabels {
  GridSpec spec;
  std::vector<std::int32_t> labels;  // 0 background, 1..count components
  int count = 0;
  std::vector<std::int64_t> sizes;   // per component, index label-1
};

// First-encounter raster-order labeling with 4- or 8-connectivity.
inline ComponentLabels connected_components(const BinaryImage& img, int connectivity = 8) {
  if (connectivity != 4 && connectivity != 8)
    throw DomainError("connected_components: connectivity must be 4 or 8");
  const int h = img.height(), w = img.width();
  ComponentLabels out;
  out.spec = img.spec;
  out.labels.assign(img.spec.pixel_count(), 0);

  static constexpr int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static constexpr int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static constexpr int dy4[] = {-1, 0, 0, 1};
  static constexpr int dx4[] = {0, -1, 1, 0};
  const int* dy = connectivity == 8 ? dy8 : dy4;
  const int* dx = connectivity == 8 ? dx8 : dx4;
  const int ndirs = connectivity;

  std::vector<std::int32_t> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!img.data[i] || out.labels[i]) continue;
      const std::int32_t label = ++out.count;
      std::int64_t size = 0;
      stack.push_back(static_cast<std::int32_t>(i));
      out.labels[i] = label;
      while (!stack.empty()) {
        const std::int32_t p = stack.back();
        stack.pop_back();
        ++size;
        const int py = p / w, px = p % w;
        for (int d = 0; d < ndirs; ++d) {
          const int qy = py + dy[d], qx = px + dx[d];
          if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
          const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
          if (img.data[q] && !out.labels[q]) {
            out.labels[q] = label;
            stack.push_back(static_cast<std::int32_t>(q));
          }
        }
      }
      out.sizes.push_back(size);
    }
  return out;
}

// Squared error of binary images = differing-pixel count.
inline double mse(const BinaryImage& z, const BinaryImage& target) {
  require_same_grid(z.spec, target.spec, "mse");
  std::int64_t diff = 0;
  for (std::size_t i = 0; i < z.data.size(); ++i) diff += z.data[i] != target.data[i];
  return static_cast<double>(diff);
}

// Area between the outermost and innermost printed contours, in nm^2.
inline double pvband(const BinaryImage& outer, const BinaryImage& inner) {
  require_same_grid(outer.spec, inner.spec, "pvband");
  std::int64_t diff = 0;
  for (std::size_t i = 0; i < outer.data.size(); ++i) diff += outer.data[i] != inner.data[i];
  return static_cast<double>(diff) * outer.spec.nm_per_px * outer.spec.nm_per_px;
}

// Minimum isolated-shape area in nm^2; +inf when the mask is empty.
inline double msa(const BinaryImage& mask, int connectivity = 8) {
  const ComponentLabels cl = connected_components(mask, connectivity);
  if (cl.count == 0) return std::numeric_limits<double>::infinity();
  const auto px = *std::min_element(cl.sizes.begin(), cl.sizes.end());
  return static_cast<double>(px) * mask.spec.nm_per_px * mask.spec.nm_per_px;
}

namespace detail {

struct ComponentOutline {
  std::vector<std::pair<int, int>> boundary;  // (y, x) pixels with a 4-neighbor outside
  int min_y = 0, min_x = 0, max_y = 0, max_x = 0;
};

inline std::vector<ComponentOutline> component_outlines(const BinaryImage& mask,
                                                        const ComponentLabels& cl) {
  const int h = mask.height(), w = mask.width();
  std::vector<ComponentOutline> outlines(cl.count);
  for (auto& o : outlines) {
    o.min_y = h;
    o.min_x = w;
    o.max_y = -1;
    o.max_x = -1;
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!mask.data[i]) continue;
      const bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                        !mask(y - 1, x) || !mask(y + 1, x) || !mask(y, x - 1) ||
                        !mask(y, x + 1);
      if (!edge) continue;
      ComponentOutline& o = outlines[cl.labels[i] - 1];
      o.boundary.emplace_back(y, x);
      o.min_y = std::min(o.min_y, y);
      o.min_x = std::min(o.min_x, x);
      o.max_y = std::max(o.max_y, y);
      o.max_x = std::max(o.max_x, x);
    }
  return outlines;
}

inline std::int64_t bbox_gap_sq(const ComponentOutline& a, const ComponentOutline& b) {
  const std::int64_t dy = std::max({0, a.min_y - b.max_y, b.min_y - a.max_y});
  const std::int64_t dx = std::max({0, a.min_x - b.max_x, b.min_x - a.max_x});
  return dy * dy + dx * dx;
}

}  // namespace detail

// Minimum pairwise pixel-center distance between distinct components, in nm.
// Exact: candidate pairs are pruned by bounding-box gap, survivors measured
// over their boundary pixels with integer arithmetic.
inline double msd(const BinaryImage& mask, int connectivity = 8) {
  const ComponentLabels cl = connected_components(mask, connectivity);
  if (cl.count < 2) return std::numeric_limits<double>::infinity();
  const auto outlines = detail::component_outlines(mask, cl);

  struct Pair {
    std::int64_t lb;
    int a, b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(cl.count) * (cl.count - 1) / 2);
  for (int a = 0; a < cl.count; ++a)
    for (int b = a + 1; b < cl.count; ++b)
      pairs.push_back({detail::bbox_gap_sq(outlines[a], outlines[b]), a, b});
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& x, const Pair& y) { return x.lb < y.lb; });

  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (const Pair& p : pairs) {
    if (p.lb >= best) break;
    for (const auto& [ay, ax] : outlines[p.a].boundary) {
      for (const auto& [by, bx] : outlines[p.b].boundary) {
        const std::int64_t dy = ay - by, dx = ax - bx;
        best = std::min(best, dy * dy + dx * dx);
      }
    }
  }
  return std::sqrt(static_cast<double>(best)) * mask.spec.nm_per_px;
}

// EPE measurement policy: sample pitch along edges, the violation threshold,
// how close to a corner samples are dropped, and how far along the normal the
// checker hunts for a printed contour.
struct EpeSpec {
  double sample_spacing_nm = 40.0;
  double threshold_nm = 15.0;
  double corner_exclusion_nm = 20.0;
  double search_limit_nm = 60.0;

  void validate() const {
    if (!(sample_spacing_nm > 0) || !(threshold_nm > 0) || !(corner_exclusion_nm > 0) ||
        !(search_limit_nm > 0))
      throw ValidationError("EpeSpec: all distances must be > 0");
  }
};

struct EpeSample {
  double x_nm = 0, y_nm = 0;  // point on the target edge
  double nx = 0, ny = 0;      // inward unit normal
};

namespace detail {

inline double shoelace_area2(const std::vector<PointNm>& poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const PointNm& a = poly[i];
    const PointNm& b = poly[(i + 1) % poly.size()];
    acc += static_cast<double>(a.x) * b.y - static_cast<double>(b.x) * a.y;
  }
  return acc;
}

}  // namespace detail

// Measurement points along every target edge at the configured pitch,
// excluding points near corners; edges shorter than the pitch get a single
// midpoint sample.
inline std::vector<EpeSample> epe_sample_points(const PolygonLayout& layout,
                                                const EpeSpec& spec) {
  spec.validate();
  std::vector<EpeSample> samples;
  for (const auto& poly : layout.polygons) {
    const bool ccw = detail::shoelace_area2(poly) > 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const PointNm& a = poly[i];
      const PointNm& b = poly[(i + 1) % n];
      const double ex = static_cast<double>(b.x - a.x);
      const double ey = static_cast<double>(b.y - a.y);
      const double len = std::hypot(ex, ey);
      const double ux = ex / len, uy = ey / len;
      // interior lies left of the edge when the ring is counter-clockwise
      const double nx = ccw ? -uy : uy;
      const double ny = ccw ? ux : -ux;

      std::vector<double> ts;
      if (len < spec.sample_spacing_nm) {
        ts.push_back(len / 2.0);
      } else {
        for (double t = spec.sample_spacing_nm; t < len; t += spec.sample_spacing_nm)
          if (t >= spec.corner_exclusion_nm && t <= len - spec.corner_exclusion_nm)
            ts.push_back(t);
      }
      for (double t : ts)
        samples.push_back({a.x + ux * t, a.y + uy * t, nx, ny});
    }
  }
  return samples;
}

namespace detail {

inline int sample_resist(const BinaryImage& z, double x_nm, double y_nm) {
  const double p = z.spec.nm_per_px;
  const int x = static_cast<int>(std::floor(x_nm / p));
  const int y = static_cast<int>(std::floor(y_nm / p));
  if (x < 0 || x >= z.width() || y < 0 || y >= z.height()) return 0;
  return z(y, x);
}

}  // namespace detail

// Counts measurement points whose nearest printed contour along the inward
// normal sits farther than the threshold (or is missing entirely within the
// search limit).
inline int epe_violations(const BinaryImage& z_nom, const PolygonLayout& layout,
                          const EpeSpec& spec) {
  const auto samples = epe_sample_points(layout, spec);
  const double p = z_nom.spec.nm_per_px;
  const int limit = std::max(1, static_cast<int>(std::lround(spec.search_limit_nm / p)));

  int violations = 0;
  for (const auto& s : samples) {
    // resist profile along the normal; sample j sits (j+0.5) px inward
    int prev = detail::sample_resist(z_nom, s.x_nm + s.nx * (-limit + 0.5) * p,
                                     s.y_nm + s.ny * (-limit + 0.5) * p);
    double best = std::numeric_limits<double>::infinity();
    for (int j = -limit + 1; j < limit; ++j) {
      const int cur = detail::sample_resist(z_nom, s.x_nm + s.nx * (j + 0.5) * p,
                                            s.y_nm + s.ny * (j + 0.5) * p);
      if (cur != prev) {
        const double epe = j * p;  // contour crossing between samples j-1 and j
        if (std::fabs(epe) < std::fabs(best)) best = epe;
      }
      prev = cur;
    }
    if (!std::isfinite(best) || std::fabs(best) > spec.threshold_nm) ++violations;
  }
  return violations;
}

}  // namespace curvyilt
