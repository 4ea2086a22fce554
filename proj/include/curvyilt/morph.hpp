#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "curvyilt/grid.hpp"

namespace curvyilt {

// Flat disc structuring element: entry (i,j) is set when its squared distance
// to the center is at most (k/2)^2.
struct StructElem {
  int k = 0;
  std::vector<std::uint8_t> data;  // k*k

  std::uint8_t at(int i, int j) const { return data[static_cast<std::size_t>(i) * k + j]; }
};

inline StructElem disc_element(int k) {
  if (k < 1 || k % 2 == 0) throw DomainError("disc_element: k must be odd and positive");
  StructElem se;
  se.k = k;
  se.data.assign(static_cast<std::size_t>(k) * k, 0);
  const int c = (k - 1) / 2;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      // 4*d^2 <= k^2 is the integer form of d <= k/2
      const int di = i - c, dj = j - c;
      if (4 * (di * di + dj * dj) <= k * k)
        se.data[static_cast<std::size_t>(i) * k + j] = 1;
    }
  return se;
}

// Arg-extremum record of one sliding min/max pass: for every output pixel the
// row-major index of the source pixel that produced it, or -1 when the
// extremum came from the zero padding (no real source).
struct MorphTape {
  GridSpec spec;
  std::vector<std::int32_t> src;
};

namespace detail {

inline std::vector<std::pair<int, int>> disc_offsets(const StructElem& se) {
  std::vector<std::pair<int, int>> offs;
  const int c = (se.k - 1) / 2;
  for (int i = 0; i < se.k; ++i)
    for (int j = 0; j < se.k; ++j)
      if (se.at(i, j)) offs.emplace_back(i - c, j - c);
  return offs;
}

template <bool kMax>
GrayImage sliding_extremum(const GrayImage& img, const StructElem& se, MorphTape* tape) {
  const int h = img.height(), w = img.width();
  const auto offs = disc_offsets(se);
  GrayImage out(img.spec);
  if (tape) {
    tape->spec = img.spec;
    tape->src.assign(img.spec.pixel_count(), -1);
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = kMax ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
      std::int32_t best_src = -1;
      for (const auto& [dy, dx] : offs) {
        const int sy = y + dy, sx = x + dx;
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        const double v = inside ? img(sy, sx) : 0.0;  // zero padding
        const bool better = kMax ? (v > best) : (v < best);
        if (better) {
          best = v;
          best_src = inside ? sy * w + sx : -1;
        } else if (v == best && best_src < 0 && inside) {
          // ties resolve to the smallest row-major real source; offsets are
          // scanned in that order, so the first in-bounds hit wins
          best_src = sy * w + sx;
        }
      }
      out(y, x) = best;
      if (tape) tape->src[static_cast<std::size_t>(y) * w + x] = best_src;
    }
  return out;
}

}  // namespace detail

// Sliding max over the disc; off-disc window entries are excluded and
// out-of-bounds entries contribute the zero padding value.
inline GrayImage dilate(const GrayImage& img, const StructElem& se, MorphTape* tape = nullptr) {
  return detail::sliding_extremum<true>(img, se, tape);
}

// Sliding min over the disc, same padding and exclusion conventions.
inline GrayImage erode(const GrayImage& img, const StructElem& se, MorphTape* tape = nullptr) {
  return detail::sliding_extremum<false>(img, se, tape);
}

inline GrayImage open(const GrayImage& img, const StructElem& se) {
  return dilate(erode(img, se), se);
}

inline GrayImage close(const GrayImage& img, const StructElem& se) {
  return erode(dilate(img, se), se);
}

// Subgradient routing for min/max: every upstream value is added at its
// recorded source pixel; outputs whose extremum sat in the padding route
// nowhere.
inline GrayImage morph_vjp(const MorphTape& tape, const GrayImage& upstream) {
  require_same_grid(tape.spec, upstream.spec, "morph_vjp");
  GrayImage grad(tape.spec);
  for (std::size_t i = 0; i < tape.src.size(); ++i)
    if (tape.src[i] >= 0) grad.data[tape.src[i]] += upstream.data[i];
  return grad;
}

// opened + closed - a, clamped to [0,1]. For binary inputs whose foreground
// clears the border it equals the opening inside a and the closing outside
// it, and the clamp never fires.
inline GrayImage corner_merge(const GrayImage& a, const GrayImage& opened,
                              const GrayImage& closed) {
  require_same_grid(a.spec, opened.spec, "corner_merge");
  require_same_grid(a.spec, closed.spec, "corner_merge");
  GrayImage out(a.spec);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = std::clamp(opened.data[i] + closed.data[i] - a.data[i], 0.0, 1.0);
  return out;
}

namespace detail {

inline constexpr double kEdtInf = 1e30;

// 1-D squared distance transform (lower envelope of parabolas).
inline void edt_1d(const double* f, int n, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kEdtInf;
  z[1] = kEdtInf;
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kEdtInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Exact squared Euclidean distance to the nearest set pixel (kEdtInf if none).
inline std::vector<double> edt_sq(const std::vector<std::uint8_t>& fg, int h, int w) {
  std::vector<double> dist(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = fg[i] ? 0.0 : kEdtInf;

  const int n = std::max(h, w);
  std::vector<double> f(n), d(n), z(static_cast<std::size_t>(n) + 1);
  std::vector<int> v(n);
  for (int x = 0; x < w; ++x) {  // columns
    for (int y = 0; y < h; ++y) f[y] = dist[static_cast<std::size_t>(y) * w + x];
    edt_1d(f.data(), h, d.data(), v.data(), z.data());
    for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {  // rows
    double* row = &dist[static_cast<std::size_t>(y) * w];
    std::copy(row, row + w, f.data());
    edt_1d(f.data(), w, d.data(), v.data(), z.data());
    std::copy(d.data(), d.data() + w, row);
  }
  return dist;
}

}  // namespace detail

// Binary dilation via the exact distance transform; agrees pixel-for-pixel
// with dilate() on {0,1} images but runs in O(n) per pixel count.
inline BinaryImage binary_dilate(const BinaryImage& img, const StructElem& se) {
  const int h = img.height(), w = img.width();
  const auto dist = detail::edt_sq(img.data, h, w);
  BinaryImage out(img.spec);
  const double r2x4 = static_cast<double>(se.k) * se.k;
  for (std::size_t i = 0; i < dist.size(); ++i) out.data[i] = 4.0 * dist[i] <= r2x4 ? 1 : 0;
  return out;
}

// Binary erosion: a pixel survives when no background pixel (the zero padding
// beyond the border included) lies within the disc radius.
inline BinaryImage binary_erode(const BinaryImage& img, const StructElem& se) {
  const int h = img.height(), w = img.width();
  // 1-pixel background ring stands in for the infinite zero padding
  const int hp = h + 2, wp = w + 2;
  std::vector<std::uint8_t> bg(static_cast<std::size_t>(hp) * wp, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      bg[static_cast<std::size_t>(y + 1) * wp + (x + 1)] = img(y, x) ? 0 : 1;
  const auto dist = detail::edt_sq(bg, hp, wp);
  BinaryImage out(img.spec);
  const double r2x4 = static_cast<double>(se.k) * se.k;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(y, x) = 4.0 * dist[static_cast<std::size_t>(y + 1) * wp + (x + 1)] > r2x4 ? 1 : 0;
  return out;
}

inline BinaryImage binary_open(const BinaryImage& img, const StructElem& se) {
  return binary_dilate(binary_erode(img, se), se);
}

inline BinaryImage binary_close(const BinaryImage& img, const StructElem& se) {
  return binary_erode(binary_dilate(img, se), se);
}

// Curvilinear design retargeting: the opening rounds convex corners, the
// closing rounds concave ones, and the merge keeps the opening inside the
// shape and the closing outside it. Straight edges away from corners are
// untouched, so critical dimensions survive.
inline BinaryImage cdr(const BinaryImage& target, int k_cvx, int k_ccv) {
  const BinaryImage opened = binary_open(target, disc_element(k_cvx));
  const BinaryImage closed = binary_close(target, disc_element(k_ccv));
  BinaryImage out(target.spec);
  for (std::size_t i = 0; i < target.data.size(); ++i)
    out.data[i] = target.data[i] ? opened.data[i] : closed.data[i];
  return out;
}

}  // namespace curvyilt
