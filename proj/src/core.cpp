#include "rsn/core.hpp"

#include <cmath>

namespace rsn {

double wrap_angle(double theta) {
  check(std::isfinite(theta), "wrap_angle: non-finite angle");
  // remainder() is exact, so adding an exact multiple of the stored 2*pi
  // round-trips bitwise; the half-open interval needs only the +pi edge fixed.
  double r = std::remainder(theta, kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  if (r < -kPi) r += kTwoPi;  // guards the one-ulp-below--pi case
  return r;
}

void validate_box(const Box7& b) {
  const double fields[7] = {b.cx, b.cy, b.cz, b.l, b.w, b.h, b.theta};
  for (double v : fields) check(std::isfinite(v), "box: non-finite field");
  check(b.l > 0.0 && b.w > 0.0 && b.h > 0.0, "box: extents must be positive");
  check(b.theta >= -kPi && b.theta < kPi, "box: theta not wrapped to [-pi, pi)");
}

Box7 make_box(double cx, double cy, double cz, double l, double w, double h,
              double theta) {
  Box7 b{cx, cy, cz, l, w, h, wrap_angle(theta)};
  validate_box(b);
  return b;
}

std::array<std::array<double, 2>, 4> box_corners_bev(const Box7& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  // CCW starting at the (+l/2, +w/2) corner.
  const double local[4][2] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::array<std::array<double, 2>, 4> out{};
  for (int i = 0; i < 4; ++i) {
    out[i][0] = b.cx + c * local[i][0] - s * local[i][1];
    out[i][1] = b.cy + s * local[i][0] + c * local[i][1];
  }
  return out;
}

bool point_in_box_bev(double x, double y, const Box7& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double dx = x - b.cx, dy = y - b.cy;
  const double lx = c * dx + s * dy;   // into box frame: rotate by -theta
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w;
}

bool point_in_box(const Point3& p, const Box7& b) {
  if (std::abs(p.z - b.cz) > 0.5 * b.h) return false;
  return point_in_box_bev(p.x, p.y, b);
}

Point3 flip_x_point(const Point3& p) { return {p.x, -p.y, p.z}; }

Box7 flip_x_box(const Box7& b) {
  Box7 out = b;
  out.cy = -b.cy;
  out.theta = wrap_angle(-b.theta);
  return out;
}

Point3 rotate_z_point(const Point3& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

Box7 rotate_z_box(const Box7& b, double angle) {
  Box7 out = b;
  const double c = std::cos(angle), s = std::sin(angle);
  out.cx = c * b.cx - s * b.cy;
  out.cy = s * b.cx + c * b.cy;
  out.theta = wrap_angle(b.theta + angle);
  return out;
}

std::pair<std::vector<Point3>, std::vector<Box7>> transform_flip_x(
    const std::vector<Point3>& points, const std::vector<Box7>& boxes) {
  std::vector<Point3> ps;
  ps.reserve(points.size());
  for (const auto& p : points) ps.push_back(flip_x_point(p));
  std::vector<Box7> bs;
  bs.reserve(boxes.size());
  for (const auto& b : boxes) bs.push_back(flip_x_box(b));
  return {std::move(ps), std::move(bs)};
}

std::pair<std::vector<Point3>, std::vector<Box7>> transform_rotate_z(
    const std::vector<Point3>& points, const std::vector<Box7>& boxes,
    double angle) {
  check(std::isfinite(angle), "transform_rotate_z: non-finite angle");
  std::vector<Point3> ps;
  ps.reserve(points.size());
  for (const auto& p : points) ps.push_back(rotate_z_point(p, angle));
  std::vector<Box7> bs;
  bs.reserve(boxes.size());
  for (const auto& b : boxes) bs.push_back(rotate_z_box(b, angle));
  return {std::move(ps), std::move(bs)};
}

Point3 RigidTransform::apply(const Point3& p) const {
  if (is_identity()) return p;
  Point3 r = rotate_z_point(p, yaw);
  return {r.x + tx, r.y + ty, r.z + tz};
}

Box7 RigidTransform::apply(const Box7& b) const {
  if (is_identity()) return b;
  Box7 out = rotate_z_box(b, yaw);
  out.cx += tx;
  out.cy += ty;
  out.cz += tz;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  Point3 t = rotate_z_point({tx, ty, tz}, -yaw);
  return {-yaw, -t.x, -t.y, -t.z};
}

RigidTransform RigidTransform::then(const RigidTransform& outer) const {
  Point3 t = outer.apply(Point3{tx, ty, tz});
  return {outer.yaw + yaw, t.x, t.y, t.z};
}

DenseTensor::DenseTensor(std::vector<int> shape_, double fill)
    : shape(std::move(shape_)) {
  std::size_t n = 1;
  for (int d : shape) {
    check(d > 0, "tensor: non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  data.assign(n, fill);
}

double& DenseTensor::at(int i, int j, int k) {
  return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}

double DenseTensor::at(int i, int j, int k) const {
  return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}

void DetectorConfig::validate() const {
  check(gamma >= 0.0 && gamma <= 1.0, "config: gamma outside [0, 1]");
  check(sigma > 0.0, "config: sigma must be positive");
  check(delta1 > 0.0 && delta1 < 1.0, "config: delta1 outside (0, 1)");
  check(delta2 > 0.0 && delta2 < 1.0, "config: delta2 outside (0, 1)");
  check(hm_eps > 0.0 && hm_eps < 1.0, "config: eps outside (0, 1)");
  check(num_heading_bins >= 1, "config: need at least one heading bin");
  for (int a = 0; a < 3; ++a) {
    check(voxel_size[a] > 0.0, "config: voxel size must be positive");
    check(region_min[a] < region_max[a], "config: empty region");
    check(norm_caps[a] > 0.0, "config: norm caps must be positive");
  }
  check(voxel_size[0] != kInf && voxel_size[1] != kInf,
        "config: only the z voxel extent may be infinite");
}

DetectorConfig DetectorConfig::vehicle() {
  DetectorConfig c;  // defaults are the vehicle settings
  c.class_id = 1;
  return c;
}

DetectorConfig DetectorConfig::pedestrian() {
  DetectorConfig c;
  c.gamma = 0.1;
  c.sigma = 0.5;
  c.num_heading_bins = 4;
  c.voxel_size = {0.1, 0.1, kInf};
  c.class_id = 2;
  return c;
}

// splitmix64 finalizer over seed/stream/counter; pure integer ops keep the
// stream identical on every platform.
static std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * counter_;
  z ^= mix64(stream_ + 0x632be59bd9b4e019ULL);
  return mix64(z);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  check(std::isfinite(lo) && std::isfinite(hi) && lo <= hi,
        "rng: bad uniform bounds");
  return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int lo, int hi) {
  check(lo <= hi, "rng: bad int bounds");
  const std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal() {
  // Box-Muller, one value per pair of draws.
  double u1 = uniform(), u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Rng Rng::fork(std::uint64_t substream) const {
  return Rng(mix64(seed_ ^ mix64(substream + 0x9e3779b97f4a7c15ULL)),
             mix64(stream_ + substream));
}

}  // namespace rsn
