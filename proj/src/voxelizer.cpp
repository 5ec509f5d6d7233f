#include "rsn/voxelizer.hpp"

#include <cmath>

namespace rsn {

void VoxelGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    check(voxel_size[a] > 0.0, "grid: voxel size must be positive");
    check(region_min[a] < region_max[a], "grid: empty region");
  }
  check(voxel_size[0] != kInf && voxel_size[1] != kInf,
        "grid: only the z extent may be infinite");
}

std::optional<Coord> VoxelGrid::coord_of(const Point3& p) const {
  const double xyz[3] = {p.x, p.y, p.z};
  Coord c{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    check(std::isfinite(xyz[a]), "grid: non-finite point");
    if (xyz[a] < region_min[a] || xyz[a] >= region_max[a]) return std::nullopt;
    if (a == 2 && pillar()) continue;  // pillar: whole z slab is one cell
    c[a] = static_cast<std::int32_t>(
        std::floor((xyz[a] - region_min[a]) / voxel_size[a]));
  }
  return c;
}

std::array<double, 3> VoxelGrid::center_of(const Coord& c, int stride_level) const {
  check(stride_level >= 1, "grid: bad stride level");
  std::array<double, 3> out{};
  for (int a = 0; a < 2; ++a)
    out[a] = region_min[a] + (static_cast<double>(c[a]) * stride_level + 0.5) * voxel_size[a];
  if (pillar())
    out[2] = 0.5 * (region_min[2] + region_max[2]);
  else
    out[2] = region_min[2] + (static_cast<double>(c[2]) * stride_level + 0.5) * voxel_size[2];
  return out;
}

VoxelGrid VoxelGrid::from_config(const DetectorConfig& cfg) {
  VoxelGrid g;
  g.voxel_size = cfg.voxel_size;
  g.region_min = cfg.region_min;
  g.region_max = cfg.region_max;
  g.validate();
  return g;
}

VoxelMap voxelize_dynamic(const std::vector<Point3>& positions,
                          const VoxelGrid& grid) {
  grid.validate();
  VoxelMap map;
  for (int i = 0; i < static_cast<int>(positions.size()); ++i) {
    const auto c = grid.coord_of(positions[i]);
    if (!c) continue;
    map[*c].push_back(i);
  }
  return map;
}

int augmented_width(int range_feature_channels, bool temporal) {
  return 3 + range_feature_channels + 9 + (temporal ? 1 : 0);
}

std::vector<AugmentedPoint> augment_points(
    const std::vector<ForegroundPoint>& points, const VoxelMap& map,
    const VoxelGrid& grid,
    const std::optional<std::vector<double>>& frame_deltas) {
  std::vector<AugmentedPoint> out;
  for (const auto& [coord, indices] : map) {
    const auto center = grid.center_of(coord);
    // Per-frame statistics within the voxel: a point's mean/var come from
    // its own frame's occupants only.
    std::map<int, std::array<double, 7>> stats;  // frame -> sum xyz, sumsq xyz, n
    for (int idx : indices) {
      const auto& p = points[idx].position;
      auto& s = stats[points[idx].frame_index];
      s[0] += p.x;
      s[1] += p.y;
      s[2] += p.z;
      s[3] += p.x * p.x;
      s[4] += p.y * p.y;
      s[5] += p.z * p.z;
      s[6] += 1.0;
    }
    for (int idx : indices) {
      const auto& fp = points[idx];
      const auto& s = stats[fp.frame_index];
      const double n = s[6];
      const double m[3] = {s[0] / n, s[1] / n, s[2] / n};
      const double var[3] = {std::max(0.0, s[3] / n - m[0] * m[0]),
                             std::max(0.0, s[4] / n - m[1] * m[1]),
                             std::max(0.0, s[5] / n - m[2] * m[2])};
      AugmentedPoint ap;
      ap.voxel = coord;
      ap.point_index = idx;
      ap.feature.reserve(
          augmented_width(static_cast<int>(fp.range_feature.size()),
                          frame_deltas.has_value()));
      ap.feature.push_back(fp.position.x);
      ap.feature.push_back(fp.position.y);
      ap.feature.push_back(fp.position.z);
      for (double v : fp.range_feature) ap.feature.push_back(v);
      ap.feature.push_back(fp.position.x - m[0]);
      ap.feature.push_back(fp.position.y - m[1]);
      ap.feature.push_back(fp.position.z - m[2]);
      for (double v : var) ap.feature.push_back(v);
      ap.feature.push_back(fp.position.x - center[0]);
      ap.feature.push_back(fp.position.y - center[1]);
      ap.feature.push_back(fp.position.z - center[2]);
      if (frame_deltas) {
        check(fp.frame_index >= 0 &&
                  fp.frame_index < static_cast<int>(frame_deltas->size()),
              "augment: frame index outside delta table");
        ap.feature.push_back((*frame_deltas)[fp.frame_index]);
      }
      out.push_back(std::move(ap));
    }
  }
  return out;
}

PointNetWeights init_pointnet(int in_width, int channels, Rng& rng) {
  check(in_width > 0 && channels > 0, "pointnet: bad dimensions");
  PointNetWeights w;
  w.linear_k = init_uniform({in_width, channels}, in_width, rng);
  w.linear_b = init_uniform({channels}, in_width, rng);
  w.ln_gain = Tensor({channels}, 1.0);
  w.ln_bias = Tensor({channels}, 0.0);
  return w;
}

void pointnet_to_store(const std::string& prefix, const PointNetWeights& w,
                       WeightStore& store) {
  store[prefix + ".linear.k"] = w.linear_k;
  store[prefix + ".linear.b"] = w.linear_b;
  store[prefix + ".ln.gain"] = w.ln_gain;
  store[prefix + ".ln.bias"] = w.ln_bias;
}

PointNetWeights pointnet_from_store(const std::string& prefix, int in_width,
                                    int channels, const WeightStore& store) {
  PointNetWeights w;
  w.linear_k = fetch(store, prefix + ".linear.k", {in_width, channels});
  w.linear_b = fetch(store, prefix + ".linear.b", {channels});
  w.ln_gain = fetch(store, prefix + ".ln.gain", {channels});
  w.ln_bias = fetch(store, prefix + ".ln.bias", {channels});
  return w;
}

namespace {

constexpr double kLayerNormEps = 1e-6;

std::vector<double> embed_point(const std::vector<double>& f,
                                const PointNetWeights& w) {
  const int din = w.linear_k.shape[0], dout = w.linear_k.shape[1];
  check(static_cast<int>(f.size()) == din, "pointnet: feature width mismatch");
  std::vector<double> e(dout);
  for (int o = 0; o < dout; ++o) e[o] = w.linear_b.data[o];
  for (int i = 0; i < din; ++i) {
    const double v = f[i];
    const double* row = w.linear_k.data.data() + static_cast<std::size_t>(i) * dout;
    for (int o = 0; o < dout; ++o) e[o] += v * row[o];
  }
  double mean = 0.0;
  for (double v : e) mean += v;
  mean /= dout;
  double var = 0.0;
  for (double v : e) var += (v - mean) * (v - mean);
  var /= dout;
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (int o = 0; o < dout; ++o) {
    double y = (e[o] - mean) * inv * w.ln_gain.data[o] + w.ln_bias.data[o];
    e[o] = y > 0.0 ? y : 0.0;
  }
  return e;
}

}  // namespace

std::vector<VoxelFeature> voxel_pointnet(const std::vector<AugmentedPoint>& points,
                                         const PointNetWeights* weights) {
  std::vector<VoxelFeature> out;
  std::size_t i = 0;
  while (i < points.size()) {
    std::size_t j = i;
    while (j < points.size() && points[j].voxel == points[i].voxel) ++j;
    VoxelFeature vf;
    vf.coord = points[i].voxel;
    for (std::size_t k = i; k < j; ++k) {
      const std::vector<double> e =
          weights ? embed_point(points[k].feature, *weights) : points[k].feature;
      if (k == i) {
        vf.feature = e;
      } else {
        check(e.size() == vf.feature.size(), "pointnet: ragged features in voxel");
        for (std::size_t c = 0; c < e.size(); ++c)
          vf.feature[c] = std::max(vf.feature[c], e[c]);
      }
    }
    out.push_back(std::move(vf));
    i = j;
  }
  return out;
}

MergedPoints temporal_merge(const std::vector<TemporalFrame>& frames) {
  check(!frames.empty(), "temporal_merge: no frames");
  MergedPoints out;
  const RigidTransform to_latest = frames[0].pose.inverse();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    check(frames[i].timestamp <= frames[0].timestamp,
          "temporal_merge: frames must be ordered latest first");
    out.deltas.push_back(frames[0].timestamp - frames[i].timestamp);
    // Frame 0 is already in the target frame; skipping the transform keeps
    // the single-frame degenerate case bitwise identical.
    const bool identity = (i == 0);
    const RigidTransform rel = identity ? RigidTransform{} : frames[i].pose.then(to_latest);
    for (const auto& fp : frames[i].points) {
      ForegroundPoint moved = fp;
      if (!identity) moved.position = rel.apply(fp.position);
      moved.frame_index = static_cast<int>(i);
      out.points.push_back(std::move(moved));
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> regroup_sequence(std::size_t frame_count,
                                                       std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(frame_count);
  for (std::size_t i = 0; i < frame_count; ++i) {
    std::vector<std::size_t> tuple;
    tuple.reserve(k + 1);
    for (std::size_t j = 0; j <= k; ++j)
      tuple.push_back(i >= j ? i - j : 0);  // clamp to the earliest frame
    out.push_back(std::move(tuple));
  }
  return out;
}

}  // namespace rsn
