#include "rsn/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace rsn {

namespace {

// Tolerance for the on-edge test. Coordinates are metric (tens of meters),
// so cross products of nearly-identical boxes land well inside this band
// while genuinely distinct vertices stay far outside it.
constexpr double kEdgeTol = 1e-9;
constexpr double kAreaTol = 1e-12;

// Cross product (b - a) x (p - a); positive when p lies left of a->b.
double edge_side(const std::array<double, 2>& a, const std::array<double, 2>& b,
                 const std::array<double, 2>& p) {
  return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
}

std::array<double, 2> line_intersect(const std::array<double, 2>& p1,
                                     const std::array<double, 2>& p2,
                                     double side1, double side2) {
  // side1/side2 are the signed distances (scaled) of p1/p2 to the clip edge;
  // they straddle zero here so the denominator is bounded away from zero.
  const double t = side1 / (side1 - side2);
  return {p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1])};
}

void dedupe(std::vector<std::array<double, 2>>& v) {
  std::vector<std::array<double, 2>> out;
  out.reserve(v.size());
  for (const auto& p : v) {
    if (!out.empty() && std::abs(p[0] - out.back()[0]) <= kAreaTol &&
        std::abs(p[1] - out.back()[1]) <= kAreaTol)
      continue;
    out.push_back(p);
  }
  while (out.size() > 1 && std::abs(out.front()[0] - out.back()[0]) <= kAreaTol &&
         std::abs(out.front()[1] - out.back()[1]) <= kAreaTol)
    out.pop_back();
  v = std::move(out);
}

}  // namespace

double polygon_area(const ConvexPolygon& poly) {
  const auto& v = poly.vertices;
  if (v.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % n];
    s += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * s;
}

ConvexPolygon clip_convex(const ConvexPolygon& subject,
                          const ConvexPolygon& clip) {
  if (subject.empty() || clip.empty()) return {};
  std::vector<std::array<double, 2>> cur = subject.vertices;
  const auto& cv = clip.vertices;
  for (std::size_t e = 0, n = cv.size(); e < n && !cur.empty(); ++e) {
    const auto& a = cv[e];
    const auto& b = cv[(e + 1) % n];
    std::vector<std::array<double, 2>> next;
    next.reserve(cur.size() + 2);
    // If everything is inside, keep the input verbatim (bitwise) so
    // self-intersection is exact.
    bool all_inside = true;
    std::vector<double> side(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
      side[i] = edge_side(a, b, cur[i]);
      if (side[i] < -kEdgeTol) all_inside = false;
    }
    if (all_inside) continue;
    for (std::size_t i = 0, m = cur.size(); i < m; ++i) {
      const std::size_t j = (i + 1) % m;
      const bool in_i = side[i] >= -kEdgeTol;
      const bool in_j = side[j] >= -kEdgeTol;
      if (in_i && in_j) {
        next.push_back(cur[j]);
      } else if (in_i && !in_j) {
        next.push_back(line_intersect(cur[i], cur[j], side[i], side[j]));
      } else if (!in_i && in_j) {
        next.push_back(line_intersect(cur[i], cur[j], side[i], side[j]));
        next.push_back(cur[j]);
      }
    }
    cur = std::move(next);
  }
  dedupe(cur);
  ConvexPolygon out{std::move(cur)};
  if (out.vertices.size() < 3 || std::abs(polygon_area(out)) < kAreaTol)
    return {};
  return out;
}

ConvexPolygon box_polygon(const Box7& b) {
  auto corners = box_corners_bev(b);
  return ConvexPolygon{{corners[0], corners[1], corners[2], corners[3]}};
}

// Areas and volumes below come from the same corner arithmetic as the
// intersection, so identical boxes give exactly 1.0 instead of 1 - 1 ulp.

double iou_bev(const Box7& a, const Box7& b) {
  validate_box(a);
  validate_box(b);
  const ConvexPolygon pa = box_polygon(a), pb = box_polygon(b);
  const double inter = polygon_area(clip_convex(pa, pb));
  const double uni = polygon_area(pa) + polygon_area(pb) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box7& a, const Box7& b) {
  validate_box(a);
  validate_box(b);
  const double atop = a.cz + 0.5 * a.h, abot = a.cz - 0.5 * a.h;
  const double btop = b.cz + 0.5 * b.h, bbot = b.cz - 0.5 * b.h;
  const double dz = std::min(atop, btop) - std::max(abot, bbot);
  if (dz <= 0.0) return 0.0;
  const ConvexPolygon pa = box_polygon(a), pb = box_polygon(b);
  const double inter = polygon_area(clip_convex(pa, pb)) * dz;
  const double va = polygon_area(pa) * (atop - abot);
  const double vb = polygon_area(pb) * (btop - bbot);
  const double uni = va + vb - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_loss(const Box7& pred, const Box7& target) {
  return 1.0 - iou_3d(pred, target);
}

}  // namespace rsn
