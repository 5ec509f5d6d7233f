#include "rsn/range_image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace rsn {

void RangeImage::validate() const {
  check(height > 0 && width > 0, "range image: empty grid");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  check(range.size() == n && intensity.size() == n && elongation.size() == n &&
            valid.size() == n,
        "range image: plane size mismatch");
  check(static_cast<int>(inclinations.size()) == height,
        "range image: inclination count != rows");
  for (int r = 1; r < height; ++r)
    check(inclinations[r] < inclinations[r - 1],
          "range image: inclinations must be strictly decreasing");
  check(azimuth_span > 0.0, "range image: non-positive azimuth span");
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) {
      check(range[i] >= 0.0, "range image: negative range on valid pixel");
    } else {
      check(range[i] == 0.0 && intensity[i] == 0.0 && elongation[i] == 0.0,
            "range image: invalid pixel must hold zeros");
    }
  }
}

std::vector<double> uniform_inclinations(int rows, double lo, double hi) {
  check(rows > 0 && lo < hi, "inclinations: bad layout");
  std::vector<double> inc(rows);
  if (rows == 1) {
    inc[0] = hi;
    return inc;
  }
  const double step = (hi - lo) / (rows - 1);
  for (int r = 0; r < rows; ++r) inc[r] = hi - r * step;
  return inc;
}

namespace {

// Nearest inclination row; the table is strictly decreasing. Exact midpoints
// resolve to the smaller row index.
int nearest_row(const std::vector<double>& inc, double value) {
  const auto it = std::lower_bound(inc.begin(), inc.end(), value,
                                   [](double a, double b) { return a > b; });
  if (it == inc.begin()) return 0;
  if (it == inc.end()) return static_cast<int>(inc.size()) - 1;
  const int hi = static_cast<int>(it - inc.begin());
  const int lo = hi - 1;
  return (inc[lo] - value <= value - inc[hi]) ? lo : hi;
}

}  // namespace

RangeImage project(const std::vector<LidarPoint>& points, int height,
                   int width, const std::vector<double>& inclinations) {
  check(height > 0 && width > 0, "project: empty grid");
  check(static_cast<int>(inclinations.size()) == height,
        "project: inclination count != rows");
  RangeImage img;
  img.height = height;
  img.width = width;
  img.inclinations = inclinations;
  const std::size_t n = static_cast<std::size_t>(height) * width;
  img.range.assign(n, 0.0);
  img.intensity.assign(n, 0.0);
  img.elongation.assign(n, 0.0);
  img.valid.assign(n, 0);

  const double bin = img.azimuth_span / width;
  for (const auto& p : points) {
    check(std::isfinite(p.position.x) && std::isfinite(p.position.y) &&
              std::isfinite(p.position.z),
          "project: non-finite point");
    const double rxy = std::hypot(p.position.x, p.position.y);
    const double r = std::hypot(rxy, p.position.z);
    const double incl = std::atan2(p.position.z, rxy);
    const double az = std::atan2(p.position.y, p.position.x);
    const int row = nearest_row(inclinations, incl);
    int col = static_cast<int>(std::floor((az + kPi) / bin));
    col %= width;  // azimuth is periodic; atan2 can return exactly +pi
    if (col < 0) col += width;
    const int idx = img.index(row, col);
    // Collision rule: keep the larger range; ties keep the earlier point.
    if (img.valid[idx] && img.range[idx] >= r) continue;
    img.range[idx] = r;
    img.intensity[idx] = p.intensity;
    img.elongation[idx] = p.elongation;
    img.valid[idx] = 1;
  }
  return img;
}

Point3 unproject(const RangeImage& img, int row, int col) {
  check(row >= 0 && row < img.height && col >= 0 && col < img.width,
        "unproject: pixel out of bounds");
  check(img.valid[img.index(row, col)], "unproject: invalid pixel");
  const double r = img.range[img.index(row, col)];
  const double incl = img.inclinations[row];
  const double az = -kPi + (col + 0.5) * (img.azimuth_span / img.width);
  const double cr = std::cos(incl);
  return {r * cr * std::cos(az), r * cr * std::sin(az), r * std::sin(incl)};
}

DenseTensor normalize(const RangeImage& img, const std::array<double, 3>& caps) {
  for (double c : caps) check(c > 0.0, "normalize: caps must be positive");
  DenseTensor out({img.height, img.width, 3});
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const int idx = img.index(i, j);
      if (!img.valid[idx]) continue;  // stays zero
      out.at(i, j, 0) = std::min(img.range[idx], caps[0]) / caps[0];
      out.at(i, j, 1) = std::min(img.intensity[idx], caps[1]) / caps[1];
      out.at(i, j, 2) = std::min(img.elongation[idx], caps[2]) / caps[2];
    }
  }
  return out;
}

std::vector<std::uint8_t> label_foreground(const RangeImage& img,
                                           const std::vector<Box7>& boxes) {
  std::vector<std::uint8_t> labels(
      static_cast<std::size_t>(img.height) * img.width, 0);
  if (boxes.empty()) return labels;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const int idx = img.index(i, j);
      if (!img.valid[idx]) continue;
      const Point3 p = unproject(img, i, j);
      for (const auto& b : boxes) {
        if (point_in_box(p, b)) {
          labels[idx] = 1;
          break;
        }
      }
    }
  }
  return labels;
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_plane(std::ofstream& f, const std::vector<double>& v) {
  for (double x : v) {
    float g = static_cast<float>(x);
    std::uint32_t u;
    std::memcpy(&u, &g, 4);
    put_u32(f, u);
  }
}

void get_f32_plane(std::ifstream& f, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = get_u32(f);
    float g;
    std::memcpy(&g, &u, 4);
    v[i] = g;
  }
}

}  // namespace

void save_range_image(const std::string& path, const RangeImage& img) {
  img.validate();
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save_range_image: cannot open " + path);
  f.write("RSNR", 4);
  put_u32(f, static_cast<std::uint32_t>(img.height));
  put_u32(f, static_cast<std::uint32_t>(img.width));
  put_f32_plane(f, img.range);
  put_f32_plane(f, img.intensity);
  put_f32_plane(f, img.elongation);
  f.write(reinterpret_cast<const char*>(img.valid.data()),
          static_cast<std::streamsize>(img.valid.size()));
  put_f32_plane(f, img.inclinations);
  check(f.good(), "save_range_image: write failed for " + path);
}

RangeImage load_range_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_range_image: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  check(f.good() && std::memcmp(magic, "RSNR", 4) == 0,
        "load_range_image: bad magic in " + path);
  RangeImage img;
  img.height = static_cast<int>(get_u32(f));
  img.width = static_cast<int>(get_u32(f));
  check(img.height > 0 && img.width > 0 && img.height < (1 << 16) &&
            img.width < (1 << 20),
        "load_range_image: implausible dimensions");
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  get_f32_plane(f, img.range, n);
  get_f32_plane(f, img.intensity, n);
  get_f32_plane(f, img.elongation, n);
  img.valid.resize(n);
  f.read(reinterpret_cast<char*>(img.valid.data()),
         static_cast<std::streamsize>(n));
  get_f32_plane(f, img.inclinations, static_cast<std::size_t>(img.height));
  check(f.good(), "load_range_image: truncated file " + path);
  img.validate();
  return img;
}

}  // namespace rsn
