#pragma once

// Range image construction from LiDAR returns, normalization, per-pixel
// foreground labels, and the RSNR on-disk format.

#include "rsn/core.hpp"

namespace rsn {

// One LiDAR return. Intensity/elongation ride along into the image channels.
struct LidarPoint {
  Point3 position;
  double intensity = 0.0;
  double elongation = 0.0;
};

// Dense H x W polar grid. Rows follow the beam inclination table (strictly
// decreasing, top row = highest beam); columns span azimuth_span around +z.
// Invalid pixels hold zeros in every channel.
struct RangeImage {
  int height = 0, width = 0;
  std::vector<double> range;       // h*w
  std::vector<double> intensity;   // h*w
  std::vector<double> elongation;  // h*w
  std::vector<std::uint8_t> valid; // h*w
  std::vector<double> inclinations;  // size h, strictly decreasing
  double azimuth_span = kTwoPi;

  int index(int row, int col) const { return row * width + col; }
  void validate() const;
};

/// Uniformly spaced inclinations from hi down to lo (inclusive endpoints).
std::vector<double> uniform_inclinations(int rows, double lo = -0.3,
                                         double hi = 0.1);

/// Rasterize returns into an image. Row = nearest inclination, column =
/// azimuth bin; when two returns land on one pixel the larger range wins
/// (ties keep the earlier point).
RangeImage project(const std::vector<LidarPoint>& points, int height,
                   int width, const std::vector<double>& inclinations);

/// Cartesian point for one valid pixel (beam direction times range).
Point3 unproject(const RangeImage& img, int row, int col);

/// (H, W, 3) tensor with channels range/intensity/elongation, each mapped
/// through min(v, cap)/cap. Invalid pixels are zero in all channels.
DenseTensor normalize(const RangeImage& img,
                      const std::array<double, 3>& caps);

/// Per-pixel foreground flags: valid and unprojected into any box
/// (boundary inclusive).
std::vector<std::uint8_t> label_foreground(const RangeImage& img,
                                           const std::vector<Box7>& boxes);

/// RSNR binary format (little-endian): magic "RSNR", u32 height, u32 width,
/// f32 range/intensity/elongation planes, u8 validity plane, f32
/// inclinations. Values are stored as f32, so a write/read round trip is
/// bit-exact at f32 precision.
void save_range_image(const std::string& path, const RangeImage& img);
RangeImage load_range_image(const std::string& path);

}  // namespace rsn
