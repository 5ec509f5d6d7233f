#pragma once

// Dynamic voxelization of gathered foreground points, per-point feature
// augmentation, the per-voxel PointNet, and temporal frame merging.

#include <map>
#include <optional>

#include "rsn/foreground.hpp"
#include "rsn/weights_io.hpp"

namespace rsn {

// Pillar mode is an infinite z extent: coordinates collapse to (x, y, 0).
struct VoxelGrid {
  std::array<double, 3> voxel_size{0.2, 0.2, kInf};
  std::array<double, 3> region_min{-79.5, -79.5, -5.0};
  std::array<double, 3> region_max{79.5, 79.5, 5.0};

  bool pillar() const { return voxel_size[2] == kInf; }
  int dims() const { return pillar() ? 2 : 3; }
  void validate() const;

  /// Voxel coordinate, or nullopt when the point leaves the region.
  /// floor((p - region_min) / voxel_size); boundary points go to the
  /// higher-index voxel, the region itself is half-open.
  std::optional<Coord> coord_of(const Point3& p) const;

  /// Metric center of a voxel at the given stride level. The pillar z
  /// center is the midpoint of the region z extent.
  std::array<double, 3> center_of(const Coord& c, int stride_level = 1) const;

  static VoxelGrid from_config(const DetectorConfig& cfg);
};

// coordinate -> indices into the input point list, lexicographic order;
// within a cell points keep input order. No capacity caps anywhere.
using VoxelMap = std::map<Coord, std::vector<int>>;

VoxelMap voxelize_dynamic(const std::vector<Point3>& positions,
                          const VoxelGrid& grid);

// Feature layout per point: [p (3), range_feature (F), p - m (3), var (3),
// p - c (3)] plus a trailing delta channel when frame deltas are given.
// m/var are the mean and per-axis population variance over the point's own
// frame's occupants of the voxel; c is the voxel center.
struct AugmentedPoint {
  Coord voxel{};
  int point_index = 0;
  std::vector<double> feature;
};

std::vector<AugmentedPoint> augment_points(
    const std::vector<ForegroundPoint>& points, const VoxelMap& map,
    const VoxelGrid& grid,
    const std::optional<std::vector<double>>& frame_deltas = std::nullopt);

int augmented_width(int range_feature_channels, bool temporal);

struct PointNetWeights {
  Tensor linear_k;  // (in_width, channels)
  Tensor linear_b;  // (channels)
  Tensor ln_gain;   // (channels)
  Tensor ln_bias;   // (channels)
};

PointNetWeights init_pointnet(int in_width, int channels, Rng& rng);
void pointnet_to_store(const std::string& prefix, const PointNetWeights& w,
                       WeightStore& store);
PointNetWeights pointnet_from_store(const std::string& prefix, int in_width,
                                    int channels, const WeightStore& store);

struct VoxelFeature {
  Coord coord{};
  std::vector<double> feature;
};

/// Per point linear -> layer norm (channel axis, eps 1e-6) -> ReLU, then a
/// channelwise max over each voxel. Pass weights == nullptr to skip the
/// embedding and max-pool the raw augmented features instead.
std::vector<VoxelFeature> voxel_pointnet(const std::vector<AugmentedPoint>& points,
                                         const PointNetWeights* weights);

// ---------------------------------------------------------------------------
// Temporal plumbing. Frames are ordered latest first.

struct TemporalFrame {
  std::vector<ForegroundPoint> points;
  RigidTransform pose;  // frame -> shared world frame
  double timestamp = 0.0;
};

struct MergedPoints {
  std::vector<ForegroundPoint> points;  // in latest-frame coordinates
  std::vector<double> deltas;           // per frame index: t_0 - t_i
};

MergedPoints temporal_merge(const std::vector<TemporalFrame>& frames);

/// Sliding (k+1)-tuples of frame indices (i, i-1, ..., i-k), reusing the
/// earliest frame while i - j < 0.
std::vector<std::vector<std::size_t>> regroup_sequence(std::size_t frame_count,
                                                       std::size_t k);

}  // namespace rsn
