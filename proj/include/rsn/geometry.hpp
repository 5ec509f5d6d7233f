#pragma once

// Rotated-box overlap: convex polygon clipping, BEV and 3D IoU.

#include "rsn/core.hpp"

namespace rsn {

// Counter-clockwise convex polygon; may be empty after clipping.
struct ConvexPolygon {
  std::vector<std::array<double, 2>> vertices;

  bool empty() const { return vertices.size() < 3; }
};

/// Signed shoelace area (positive for CCW input).
double polygon_area(const ConvexPolygon& poly);

/// Sutherland-Hodgman clip of one convex polygon by another. Vertices on a
/// clip edge count as inside, so clipping a polygon by itself returns it
/// unchanged. Results with area below 1e-12 collapse to empty.
ConvexPolygon clip_convex(const ConvexPolygon& subject,
                          const ConvexPolygon& clip);

ConvexPolygon box_polygon(const Box7& b);

/// Rotated IoU of the BEV footprints. Always in [0, 1].
double iou_bev(const Box7& a, const Box7& b);

/// Rotated 3D IoU: BEV intersection area times z overlap over volume union.
double iou_3d(const Box7& a, const Box7& b);

/// 1 - iou_3d. Forward value only; no gradient is defined for it.
double iou_loss(const Box7& pred, const Box7& target);

}  // namespace rsn
