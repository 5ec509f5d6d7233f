#include "rsn/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace rsn {

std::vector<MatchEntry> match_greedy(const std::vector<Detection>& detections,
                                     const std::vector<Box7>& gt_boxes,
                                     double iou_threshold, IouMode mode) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<bool> taken(gt_boxes.size(), false);
  std::vector<MatchEntry> entries;
  entries.reserve(detections.size());
  for (std::size_t di : order) {
    const Detection& det = detections[di];
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t gi = 0; gi < gt_boxes.size(); ++gi) {
      if (taken[gi]) continue;
      const double iou = mode == IouMode::k3d ? iou_3d(det.box, gt_boxes[gi])
                                              : iou_bev(det.box, gt_boxes[gi]);
      if (iou > best_iou || (best < 0 && iou == best_iou && iou >= iou_threshold)) {
        best_iou = iou;
        best = static_cast<int>(gi);
      }
    }
    MatchEntry e;
    e.score = det.score;
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      e.matched = true;
      const double dtheta = wrap_angle(det.box.theta - gt_boxes[static_cast<std::size_t>(best)].theta);
      e.heading_weight = std::max(0.0, 1.0 - std::fabs(dtheta) / kPi);
    }
    entries.push_back(e);
  }
  return entries;
}

EvalResult evaluate_ap(const std::vector<EvalFrame>& frames,
                       double iou_threshold, IouMode mode) {
  EvalResult r;
  std::vector<MatchEntry> pooled;
  for (const EvalFrame& f : frames) {
    r.num_gt += static_cast<int>(f.gt_boxes.size());
    r.num_det += static_cast<int>(f.detections.size());
    const auto entries = match_greedy(f.detections, f.gt_boxes, iou_threshold, mode);
    pooled.insert(pooled.end(), entries.begin(), entries.end());
  }
  check(r.num_gt > 0, "evaluate_ap: no ground truth boxes");

  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const MatchEntry& a, const MatchEntry& b) {
                     return a.score > b.score;
                   });

  double tp = 0.0, fp = 0.0, hw = 0.0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].score == pooled[i].score) {
      if (pooled[j].matched) {
        tp += 1.0;
        hw += pooled[j].heading_weight;
      } else {
        fp += 1.0;
      }
      ++j;
    }
    const double recall = tp / r.num_gt;
    const double precision = tp / (tp + fp);
    const double precision_h = hw / (tp + fp);
    r.ap += (recall - prev_recall) * precision;
    r.aph += (recall - prev_recall) * precision_h;
    prev_recall = recall;
    i = j;
  }
  return r;
}

namespace {

struct WbfMember {
  Detection det;
  int source = 0;
};

bool box_less(const Box7& a, const Box7& b) {
  const auto ta = std::make_tuple(a.cx, a.cy, a.cz, a.l, a.w, a.h, a.theta);
  const auto tb = std::make_tuple(b.cx, b.cy, b.cz, b.l, b.w, b.h, b.theta);
  return ta < tb;
}

struct WbfCluster {
  std::vector<WbfMember> members;
  Box7 fused;

  void refuse(const Box7& toward) {
    if (members.size() == 1) {
      fused = members[0].det.box;
      return;
    }
    bool all_equal = true;
    for (const WbfMember& m : members)
      if (box_less(m.det.box, members[0].det.box) ||
          box_less(members[0].det.box, m.det.box))
        all_equal = false;
    if (all_equal) {
      // Unanimous geometry passes through untouched; the weighted mean
      // would round.
      fused = members[0].det.box;
      return;
    }
    double wsum = 0.0, cx = 0.0, cy = 0.0, cz = 0.0, l = 0.0, w = 0.0, h = 0.0;
    double ss = 0.0, sc = 0.0;
    bool same_yaw = true;
    for (const WbfMember& m : members) {
      const double s = m.det.score;
      wsum += s;
      cx += s * m.det.box.cx;
      cy += s * m.det.box.cy;
      cz += s * m.det.box.cz;
      l += s * m.det.box.l;
      w += s * m.det.box.w;
      h += s * m.det.box.h;
      ss += s * std::sin(2.0 * m.det.box.theta);
      sc += s * std::cos(2.0 * m.det.box.theta);
      if (m.det.box.theta != members[0].det.box.theta) same_yaw = false;
    }
    fused.cx = cx / wsum;
    fused.cy = cy / wsum;
    fused.cz = cz / wsum;
    fused.l = l / wsum;
    fused.w = w / wsum;
    fused.h = h / wsum;
    if (same_yaw) {
      fused.theta = members[0].det.box.theta;
    } else {
      double psi = 0.5 * std::atan2(ss, sc);
      // Axis-only fusion leaves a pi ambiguity; face the reference box.
      const double flipped = wrap_angle(psi + kPi);
      if (std::fabs(wrap_angle(flipped - toward.theta)) <
          std::fabs(wrap_angle(psi - toward.theta)))
        psi = flipped;
      fused.theta = wrap_angle(psi);
    }
  }
};

}  // namespace

std::vector<Detection> wbf_3d(const std::vector<std::vector<Detection>>& sets,
                              double iou_threshold, int total_sets) {
  if (total_sets < 0) total_sets = static_cast<int>(sets.size());
  check(total_sets > 0, "wbf_3d: total_sets must be positive");

  std::vector<WbfMember> all;
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (const Detection& d : sets[s])
      all.push_back(WbfMember{d, static_cast<int>(s)});

  std::sort(all.begin(), all.end(), [](const WbfMember& a, const WbfMember& b) {
    if (a.det.score != b.det.score) return a.det.score > b.det.score;
    if (box_less(a.det.box, b.det.box)) return true;
    if (box_less(b.det.box, a.det.box)) return false;
    return a.source < b.source;
  });

  std::vector<WbfCluster> clusters;
  for (const WbfMember& m : all) {
    bool placed = false;
    for (WbfCluster& c : clusters) {
      if (iou_3d(c.fused, m.det.box) >= iou_threshold) {
        c.members.push_back(m);
        c.refuse(c.members[0].det.box);
        placed = true;
        break;
      }
    }
    if (!placed) {
      WbfCluster c;
      c.members.push_back(m);
      c.fused = m.det.box;
      clusters.push_back(std::move(c));
    }
  }

  std::vector<Detection> out;
  out.reserve(clusters.size());
  for (const WbfCluster& c : clusters) {
    std::set<int> sources;
    double score_sum = 0.0;
    bool same_score = true;
    for (const WbfMember& m : c.members) {
      sources.insert(m.source);
      score_sum += m.det.score;
      if (m.det.score != c.members[0].det.score) same_score = false;
    }
    const double mean_score =
        same_score ? c.members[0].det.score
                   : score_sum / static_cast<double>(c.members.size());
    Detection d;
    d.box = c.fused;
    d.score = mean_score * (static_cast<double>(sources.size()) /
                            static_cast<double>(total_sets));
    d.class_id = c.members[0].det.class_id;
    out.push_back(d);
  }
  return out;
}

std::vector<std::vector<Detection>> tta_wrap(
    const std::vector<Point3>& points,
    const std::vector<RigidTransform>& transforms,
    const std::function<std::vector<Detection>(const std::vector<Point3>&)>& run) {
  std::vector<std::vector<Detection>> out;
  out.reserve(transforms.size());
  for (const RigidTransform& t : transforms) {
    if (t.is_identity()) {
      out.push_back(run(points));
      continue;
    }
    std::vector<Point3> moved;
    moved.reserve(points.size());
    for (const Point3& p : points) moved.push_back(t.apply(p));
    std::vector<Detection> dets = run(moved);
    const RigidTransform back = t.inverse();
    for (Detection& d : dets) d.box = back.apply(d.box);
    out.push_back(std::move(dets));
  }
  return out;
}

}  // namespace rsn
