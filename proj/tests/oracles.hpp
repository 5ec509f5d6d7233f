#pragma once

// Shared test scaffolding: relative error, central-difference gradient
// checks, brute-force reference implementations kept deliberately separate
// from the library code paths, and random input generators.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "rsn/core.hpp"
#include "rsn/evalkit.hpp"
#include "rsn/geometry.hpp"
#include "rsn/rife.hpp"
#include "rsn/sparse_engine.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  if (scale < 1e-6) return std::fabs(a - b);  // absolute near zero
  return std::fabs(a - b) / scale;
}

// Central-difference check of an analytic gradient, one coordinate at a
// time. f evaluates the loss on a full parameter vector.
inline double max_fd_rel_err(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x,
                             const std::vector<double>& grad,
                             double step = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> p = x;
    p[i] = x[i] + step;
    const double up = f(p);
    p[i] = x[i] - step;
    const double dn = f(p);
    const double fd = (up - dn) / (2.0 * step);
    worst = std::max(worst, rel_err(fd, grad[i]));
  }
  return worst;
}

// Direct dense cross-correlation with vertical zero padding and horizontal
// wrap; written from the definition, independent of conv2d_forward.
inline rsn::DenseTensor conv2d_reference(const rsn::DenseTensor& in,
                                         const rsn::Conv2D& conv) {
  const int h = in.shape[0], w = in.shape[1], cin = in.shape[2];
  const int kh = conv.kernel.shape[0], kw = conv.kernel.shape[1];
  const int cout = conv.kernel.shape[3];
  const int s = conv.stride;
  const int oh = (h + s - 1) / s, ow = (w + s - 1) / s;
  rsn::DenseTensor out({oh, ow, cout});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = conv.bias.data[static_cast<std::size_t>(co)];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const int iy = oy * s + ky - kh / 2;
            if (iy < 0 || iy >= h) continue;
            int ix = (ox * s + kx - kw / 2) % w;
            if (ix < 0) ix += w;
            for (int ci = 0; ci < cin; ++ci) {
              const std::size_t ki =
                  ((static_cast<std::size_t>(ky) * kw + kx) * cin + ci) * cout + co;
              acc += in.at(iy, ix, ci) * conv.kernel.data[ki];
            }
          }
        out.at(oy, ox, co) = acc;
      }
  return out;
}

// Dense reference for the sparse convolutions: features live in a
// coordinate map, absent sites read as zero, and out(o) follows
// out(o) = bias + sum_k W[k] in(stride * o - k) evaluated directly.
struct DenseSparseRef {
  std::map<rsn::Coord, std::vector<double>> sites;
  int dims = 2;
  int channels = 0;
};

inline DenseSparseRef densify(const rsn::SparseTensor& t) {
  DenseSparseRef r;
  r.dims = t.dims;
  r.channels = t.channels;
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::vector<double> f(t.feat(i), t.feat(i) + t.channels);
    r.sites[t.coords[i]] = std::move(f);
  }
  return r;
}

inline std::vector<rsn::Coord> kernel_offsets_ref(int dims, int extent) {
  const int r = extent / 2;
  std::vector<rsn::Coord> offs;
  for (int x = -r; x <= r; ++x)
    for (int y = -r; y <= r; ++y) {
      if (dims == 2) {
        offs.push_back({x, y, 0});
        continue;
      }
      for (int z = -r; z <= r; ++z) offs.push_back({x, y, z});
    }
  return offs;
}

inline std::vector<double> sparse_conv_reference_at(
    const DenseSparseRef& in, const rsn::SparseConvWeights& w,
    const rsn::Coord& out_coord, int stride, int extent) {
  const int cin = in.channels;
  const int cout = w.bias.shape[0];
  const auto offs = kernel_offsets_ref(in.dims, extent);
  std::vector<double> acc(w.bias.data);
  for (std::size_t k = 0; k < offs.size(); ++k) {
    rsn::Coord ic{};
    for (int a = 0; a < 3; ++a) ic[a] = stride * out_coord[a] - offs[k][a];
    if (in.dims == 2) ic[2] = 0;
    const auto it = in.sites.find(ic);
    if (it == in.sites.end()) continue;
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co)
        acc[static_cast<std::size_t>(co)] +=
            w.kernel.data[(k * cin + ci) * cout + co] * it->second[static_cast<std::size_t>(ci)];
  }
  return acc;
}

// Active output set computed straight from the definitions.
inline std::vector<rsn::Coord> sc_active_reference(const std::vector<rsn::Coord>& in,
                                                   int dims, int stride,
                                                   int extent) {
  std::map<rsn::Coord, bool> out;
  const auto offs = kernel_offsets_ref(dims, extent);
  for (const rsn::Coord& i : in)
    for (const rsn::Coord& k : offs) {
      if (stride == 1) {
        rsn::Coord o{i[0] + k[0], i[1] + k[1], dims == 3 ? i[2] + k[2] : 0};
        out[o] = true;
        continue;
      }
      rsn::Coord sum{i[0] + k[0], i[1] + k[1], dims == 3 ? i[2] + k[2] : 0};
      bool exact = true;
      for (int a = 0; a < dims; ++a)
        if (sum[a] % 2 != 0) exact = false;
      if (!exact) continue;
      rsn::Coord o{sum[0] / 2, sum[1] / 2, dims == 3 ? sum[2] / 2 : 0};
      out[o] = true;
    }
  std::vector<rsn::Coord> v;
  for (const auto& [c, _] : out) v.push_back(c);
  return v;
}

// Monte Carlo 3D IoU over the joint bounding volume.
inline double mc_iou_3d(const rsn::Box7& a, const rsn::Box7& b, int samples,
                        rsn::Rng& rng) {
  double lo[3] = {rsn::kInf, rsn::kInf, rsn::kInf};
  double hi[3] = {-rsn::kInf, -rsn::kInf, -rsn::kInf};
  for (const rsn::Box7* box : {&a, &b}) {
    const auto corners = rsn::box_corners_bev(*box);
    for (const auto& c : corners) {
      lo[0] = std::min(lo[0], c[0]);
      hi[0] = std::max(hi[0], c[0]);
      lo[1] = std::min(lo[1], c[1]);
      hi[1] = std::max(hi[1], c[1]);
    }
    lo[2] = std::min(lo[2], box->cz - 0.5 * box->h);
    hi[2] = std::max(hi[2], box->cz + 0.5 * box->h);
  }
  long in_a = 0, in_b = 0, in_both = 0;
  for (int s = 0; s < samples; ++s) {
    rsn::Point3 p{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                  rng.uniform(lo[2], hi[2])};
    const bool pa = rsn::point_in_box(p, a);
    const bool pb = rsn::point_in_box(p, b);
    in_a += pa;
    in_b += pb;
    in_both += pa && pb;
  }
  const long uni = in_a + in_b - in_both;
  if (uni == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(uni);
}

// All-threshold reference evaluator. For every distinct score it rematches
// the kept prefix from scratch with its own greedy pass, then integrates
// precision over recall steps. Mirrors the metric definition, not the
// library's single-pass pooling.
struct RefEval {
  double ap = 0.0;
  double aph = 0.0;
};

inline RefEval brute_force_ap(const std::vector<rsn::EvalFrame>& frames,
                              double iou_threshold, rsn::IouMode mode) {
  int num_gt = 0;
  std::vector<double> scores;
  for (const auto& f : frames) {
    num_gt += static_cast<int>(f.gt_boxes.size());
    for (const auto& d : f.detections) scores.push_back(d.score);
  }
  std::sort(scores.begin(), scores.end(), std::greater<double>());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  RefEval r;
  double prev_recall = 0.0;
  for (double cut : scores) {
    // Rematch the kept prefix from scratch, one independent greedy pass per
    // frame, then evaluate the (recall, precision) point it produces.
    struct Entry {
      double score;
      bool matched;
      double hw;
    };
    std::vector<Entry> entries;
    for (const auto& f : frames) {
      std::vector<rsn::Detection> dets;
      for (const auto& d : f.detections)
        if (d.score >= cut) dets.push_back(d);
      std::vector<std::size_t> order(dets.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return dets[x].score > dets[y].score;
      });
      std::vector<bool> taken(f.gt_boxes.size(), false);
      for (std::size_t di : order) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t gi = 0; gi < f.gt_boxes.size(); ++gi) {
          if (taken[gi]) continue;
          const double iou = mode == rsn::IouMode::k3d
                                 ? rsn::iou_3d(dets[di].box, f.gt_boxes[gi])
                                 : rsn::iou_bev(dets[di].box, f.gt_boxes[gi]);
          if (iou >= iou_threshold && iou > best_iou) {
            best_iou = iou;
            best = static_cast<int>(gi);
          }
        }
        Entry e{dets[di].score, false, 0.0};
        if (best >= 0) {
          taken[static_cast<std::size_t>(best)] = true;
          e.matched = true;
          const double dt = rsn::wrap_angle(dets[di].box.theta -
                                            f.gt_boxes[static_cast<std::size_t>(best)].theta);
          e.hw = std::max(0.0, 1.0 - std::fabs(dt) / rsn::kPi);
        }
        entries.push_back(e);
      }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });
    double tp = 0.0, hw_sum = 0.0;
    for (const Entry& e : entries) {
      if (!e.matched) continue;
      tp += 1.0;
      hw_sum += e.hw;
    }
    const double kept = static_cast<double>(entries.size());
    const double recall = tp / num_gt;
    const double precision = kept > 0 ? tp / kept : 0.0;
    const double heading_prec = kept > 0 ? hw_sum / kept : 0.0;
    r.ap += (recall - prev_recall) * precision;
    r.aph += (recall - prev_recall) * heading_prec;
    prev_recall = recall;
  }
  return r;
}

inline rsn::Box7 random_box(rsn::Rng& rng, double span = 10.0) {
  return rsn::make_box(rng.uniform(-span, span), rng.uniform(-span, span),
                       rng.uniform(-2.0, 2.0), rng.uniform(1.0, 5.0),
                       rng.uniform(1.0, 4.0), rng.uniform(1.0, 3.0),
                       rng.uniform(-rsn::kPi, rsn::kPi));
}

// A second box guaranteed to overlap the first substantially.
inline rsn::Box7 perturbed_box(const rsn::Box7& a, rsn::Rng& rng) {
  return rsn::make_box(a.cx + rng.uniform(-0.3, 0.3) * a.l,
                       a.cy + rng.uniform(-0.3, 0.3) * a.w,
                       a.cz + rng.uniform(-0.3, 0.3) * a.h,
                       a.l * rng.uniform(0.8, 1.25), a.w * rng.uniform(0.8, 1.25),
                       a.h * rng.uniform(0.8, 1.25),
                       a.theta + rng.uniform(-0.4, 0.4));
}

}  // namespace testutil
