#pragma once

// Detection metrics (AP and heading-weighted AP via greedy IoU matching)
// and a 3D weighted-boxes-fusion ensembler with test-time-augmentation
// plumbing.

#include <functional>

#include "rsn/geometry.hpp"

namespace rsn {

// One frame's detections and ground truth; matching never crosses frames.
struct EvalFrame {
  std::vector<Detection> detections;
  std::vector<Box7> gt_boxes;
};

// Which overlap measure drives the matching.
enum class IouMode { kBev, k3d };

// One scored match attempt. heading_weight is max(0, 1 - |wrap(dtheta)| / pi)
// for matched entries and 0 otherwise.
struct MatchEntry {
  double score = 0.0;
  bool matched = false;
  double heading_weight = 0.0;
};

/// Greedy matching in descending score order (stable on ties): each
/// detection takes the unmatched ground truth with the highest IoU at or
/// above the threshold, lowest index on ties. Entries are returned in the
/// processing order.
std::vector<MatchEntry> match_greedy(const std::vector<Detection>& detections,
                                     const std::vector<Box7>& gt_boxes,
                                     double iou_threshold,
                                     IouMode mode = IouMode::k3d);

struct EvalResult {
  double ap = 0.0;
  double aph = 0.0;
  int num_gt = 0;
  int num_det = 0;
};

/// AP over the pooled per-frame match lists: prefixes advance one
/// equal-score group at a time, AP integrates precision against recall
/// steps. APH keeps the same recall axis but replaces the precision
/// numerator with the sum of heading weights. Errors when there is no
/// ground truth.
EvalResult evaluate_ap(const std::vector<EvalFrame>& frames,
                       double iou_threshold, IouMode mode = IouMode::k3d);

/// Weighted boxes fusion across detector outputs. Detections are processed
/// in a canonical order (score descending, then box fields, then source
/// set) and join the first cluster whose fused box overlaps them at
/// iou_threshold or better. Fused geometry is the score-weighted member
/// mean; yaw is fused on the doubled circle and oriented toward the
/// highest-score member. Fused score = mean member score scaled by
/// (distinct contributing sets / total_sets).
std::vector<Detection> wbf_3d(const std::vector<std::vector<Detection>>& sets,
                              double iou_threshold = 0.55, int total_sets = -1);

/// Runs a detector under each rigid transform and maps the resulting boxes
/// back through the inverse, yielding one detection set per transform
/// (identity transforms skip the point copy and box remap entirely).
std::vector<std::vector<Detection>> tta_wrap(
    const std::vector<Point3>& points,
    const std::vector<RigidTransform>& transforms,
    const std::function<std::vector<Detection>(const std::vector<Point3>&)>& run);

}  // namespace rsn
