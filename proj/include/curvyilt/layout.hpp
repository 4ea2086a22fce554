#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "curvyilt/errors.hpp"

namespace curvyilt {

struct PointNm {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool operator==(const PointNm&) const = default;
};

struct BoundingBoxNm {
  std::int64_t min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

// Simple rectilinear polygons, closed vertex lists in integer nm.
// Consecutive moves (including the closing edge) alternate between
// horizontal and vertical; self-intersection is a caller precondition.
struct PolygonLayout {
  std::vector<std::vector<PointNm>> polygons;

  bool empty() const { return polygons.empty(); }

  BoundingBoxNm bounding_box() const {
    BoundingBoxNm bb;
    bb.min_x = bb.min_y = std::numeric_limits<std::int64_t>::max();
    bb.max_x = bb.max_y = std::numeric_limits<std::int64_t>::min();
    for (const auto& poly : polygons)
      for (const auto& p : poly) {
        bb.min_x = std::min(bb.min_x, p.x);
        bb.min_y = std::min(bb.min_y, p.y);
        bb.max_x = std::max(bb.max_x, p.x);
        bb.max_y = std::max(bb.max_y, p.y);
      }
    if (polygons.empty()) bb = BoundingBoxNm{};
    return bb;
  }
};

inline void validate_manhattan_ring(const std::vector<PointNm>& ring) {
  const std::size_t n = ring.size();
  if (n < 4) throw FormatError("polygon needs at least 4 vertices");
  if (n % 2 != 0) throw FormatError("Manhattan polygon needs an even vertex count");
  for (std::size_t i = 0; i < n; ++i) {
    const PointNm& a = ring[i];
    const PointNm& b = ring[(i + 1) % n];
    const bool horizontal = (a.y == b.y && a.x != b.x);
    const bool vertical = (a.x == b.x && a.y != b.y);
    if (!horizontal && !vertical)
      throw FormatError("polygon edge is not axis-aligned or has zero length");
    const PointNm& c = ring[(i + 2) % n];
    const bool next_horizontal = (b.y == c.y && b.x != c.x);
    if (horizontal == next_horizontal)
      throw FormatError("polygon moves must alternate horizontal/vertical");
  }
}

// One polygon per line: `poly x1 y1 x2 y2 ... xn yn`, integer nm.
// Lines starting with '#' and blank lines are ignored.
inline PolygonLayout parse_layout(std::istream& in) {
  PolygonLayout layout;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "poly")
      throw FormatError("layout line " + std::to_string(lineno) +
                        ": expected 'poly', got '" + tag + "'");
    std::vector<PointNm> ring;
    std::int64_t x, y;
    while (ls >> x >> y) ring.push_back({x, y});
    if (!ls.eof())
      throw FormatError("layout line " + std::to_string(lineno) + ": malformed coordinate");
    try {
      validate_manhattan_ring(ring);
    } catch (const FormatError& e) {
      throw FormatError("layout line " + std::to_string(lineno) + ": " + e.what());
    }
    layout.polygons.push_back(std::move(ring));
  }
  return layout;
}

inline PolygonLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file: " + path);
  return parse_layout(in);
}

inline void save_layout(const PolygonLayout& layout, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write layout file: " + path);
  for (const auto& poly : layout.polygons) {
    out << "poly";
    for (const auto& p : poly) out << ' ' << p.x << ' ' << p.y;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline PolygonLayout translate(const PolygonLayout& layout, std::int64_t dx, std::int64_t dy) {
  PolygonLayout out = layout;
  for (auto& poly : out.polygons)
    for (auto& p : poly) {
      p.x += dx;
      p.y += dy;
    }
  return out;
}

}  // namespace curvyilt
