#pragma once

// Core value types shared by the whole pipeline: points, 7-DoF boxes,
// dense tensors, detector constants and the seeded deterministic RNG.

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsn {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Integer cell coordinate. 2D users keep the third component at zero.
using Coord = std::array<std::int32_t, 3>;

/// Wrap an angle to [-pi, pi). Throws on non-finite input.
double wrap_angle(double theta);

// Upright 3D box: absolute center, full extents, heading about +z.
// theta is kept wrapped to [-pi, pi); extents must be positive.
struct Box7 {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double theta = 0.0;
};

/// Validating constructor: wraps theta, rejects non-finite fields and
/// non-positive extents.
Box7 make_box(double cx, double cy, double cz, double l, double w, double h,
              double theta);

void validate_box(const Box7& b);

struct Detection {
  Box7 box;
  double score = 0.0;
  int class_id = 0;
};

/// BEV footprint corners in counter-clockwise order.
std::array<std::array<double, 2>, 4> box_corners_bev(const Box7& b);

/// Boundary-inclusive containment test in the box frame.
bool point_in_box(const Point3& p, const Box7& b);

/// Same test ignoring z (BEV footprint only).
bool point_in_box_bev(double x, double y, const Box7& b);

// ---------------------------------------------------------------------------
// Global frame transforms (augmentation / ego motion).

/// Mirror across the XZ plane: y -> -y, heading -> -heading.
Point3 flip_x_point(const Point3& p);
Box7 flip_x_box(const Box7& b);

/// Rotate about +z by angle.
Point3 rotate_z_point(const Point3& p, double angle);
Box7 rotate_z_box(const Box7& b, double angle);

std::pair<std::vector<Point3>, std::vector<Box7>> transform_flip_x(
    const std::vector<Point3>& points, const std::vector<Box7>& boxes);
std::pair<std::vector<Point3>, std::vector<Box7>> transform_rotate_z(
    const std::vector<Point3>& points, const std::vector<Box7>& boxes,
    double angle);

// Planar rigid motion (yaw about +z plus translation). Used for ego poses
// and test-time augmentation; composition and inverse are exact for the
// identity so degenerate temporal paths stay bitwise clean.
struct RigidTransform {
  double yaw = 0.0;
  double tx = 0.0, ty = 0.0, tz = 0.0;

  Point3 apply(const Point3& p) const;
  Box7 apply(const Box7& b) const;
  RigidTransform inverse() const;
  /// Composition: result.apply(p) == outer.apply(this->apply(p)).
  RigidTransform then(const RigidTransform& outer) const;
  bool is_identity() const { return yaw == 0.0 && tx == 0.0 && ty == 0.0 && tz == 0.0; }
};

// ---------------------------------------------------------------------------
// Dense row-major tensor, rank 3 (h, w, c) in practice.

struct DenseTensor {
  std::vector<int> shape;
  std::vector<double> data;

  DenseTensor() = default;
  DenseTensor(std::vector<int> shape_, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  double& at(int i, int j, int k);
  double at(int i, int j, int k) const;
};

// ---------------------------------------------------------------------------
// Per-class detector constants. Pillar mode is encoded as an infinite z
// voxel extent.

struct DetectorConfig {
  double gamma = 0.15;            // foreground score threshold
  double lambda1 = 400.0;         // segmentation loss weight
  double lambda2 = 4.0;           // heatmap loss weight
  double sigma = 1.0;             // heatmap sharpness
  double delta1 = 0.2;            // heatmap mask threshold (box loss)
  double delta2 = 0.2;            // decode candidate threshold
  double hm_alpha = 2.0;          // heatmap focal exponent
  double hm_beta = 4.0;           // heatmap negative down-weight exponent
  double hm_eps = 1e-3;           // positive-site tolerance
  double focal_alpha = 0.25;      // segmentation focal loss balance
  double focal_gamma = 2.0;       // segmentation focal loss exponent
  int num_heading_bins = 12;
  std::array<double, 3> voxel_size{0.2, 0.2, kInf};
  std::array<double, 3> region_min{-79.5, -79.5, -5.0};
  std::array<double, 3> region_max{79.5, 79.5, 5.0};
  std::array<double, 3> norm_caps{79.5, 2.0, 2.0};  // range, intensity, elongation
  int class_id = 0;

  bool pillar() const { return voxel_size[2] == kInf; }
  void validate() const;

  static DetectorConfig vehicle();
  static DetectorConfig pedestrian();
};

// ---------------------------------------------------------------------------
// Counter-based deterministic RNG. A (seed, stream) pair plus a draw
// counter is hashed per draw, so identical seeds give identical streams on
// every platform and substreams can be forked without sharing state.

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  int uniform_int(int lo, int hi);         // inclusive bounds
  double normal();                         // standard normal

  /// Independent substream; the parent counter is unaffected.
  Rng fork(std::uint64_t substream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace rsn
