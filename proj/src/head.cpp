#include "rsn/head.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rsn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(sigmoid(x)) = -softplus(-x), stable for large |x|.
double log_sigmoid(double x) {
  if (x > 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double site_distance(const std::array<double, 3>& v, const Box7& b,
                     bool pillar) {
  const double dx = v[0] - b.cx;
  const double dy = v[1] - b.cy;
  if (pillar) return std::sqrt(dx * dx + dy * dy);
  const double dz = v[2] - b.cz;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool site_in_box(const std::array<double, 3>& v, const Box7& b, bool pillar) {
  if (pillar) return point_in_box_bev(v[0], v[1], b);
  return point_in_box(Point3{v[0], v[1], v[2]}, b);
}

}  // namespace

HeadWeights init_head(int in_channels, int num_bins, Rng& rng) {
  check(in_channels > 0 && num_bins > 0, "init_head: bad dimensions");
  const int out = 7 + 2 * num_bins;
  HeadWeights w;
  w.kernel = init_uniform({in_channels, out}, in_channels, rng);
  w.bias = init_uniform({out}, in_channels, rng);
  return w;
}

void head_to_store(const std::string& prefix, const HeadWeights& w,
                   WeightStore& store) {
  store[prefix + ".k"] = w.kernel;
  store[prefix + ".b"] = w.bias;
}

HeadWeights head_from_store(const std::string& prefix, int in_channels,
                            int num_bins, const WeightStore& store) {
  const int out = 7 + 2 * num_bins;
  HeadWeights w;
  w.kernel = fetch(store, prefix + ".k", {in_channels, out});
  w.bias = fetch(store, prefix + ".b", {out});
  return w;
}

HeadOutput head_forward(const SparseTensor& features, const HeadWeights& w,
                        int num_bins) {
  check(num_bins > 0, "head_forward: num_bins must be positive");
  const int cin = features.channels;
  const int out = 7 + 2 * num_bins;
  check(w.kernel.shape == std::vector<int>({cin, out}),
        "head_forward: kernel shape mismatch");
  check(w.bias.shape == std::vector<int>({out}),
        "head_forward: bias shape mismatch");

  const std::size_t n = features.coords.size();
  HeadOutput head;
  head.num_bins = num_bins;
  head.heatmap_logits.resize(n);
  head.box_params.resize(n);
  head.bin_logits.resize(n * num_bins);
  head.bin_residuals.resize(n * num_bins);

  std::vector<double> row(out);
  for (std::size_t i = 0; i < n; ++i) {
    const double* f = features.feat(i);
    for (int o = 0; o < out; ++o) row[o] = w.bias.data[o];
    for (int c = 0; c < cin; ++c) {
      const double fv = f[c];
      const double* kr = &w.kernel.data[static_cast<std::size_t>(c) * out];
      for (int o = 0; o < out; ++o) row[o] += fv * kr[o];
    }
    head.heatmap_logits[i] = row[0];
    for (int d = 0; d < 6; ++d) head.box_params[i][d] = row[1 + d];
    for (int b = 0; b < num_bins; ++b) {
      head.bin_logits[i * num_bins + b] = row[7 + b];
      head.bin_residuals[i * num_bins + b] = row[7 + num_bins + b];
    }
  }
  return head;
}

HeatmapTarget compute_heatmap(const std::vector<std::array<double, 3>>& centers,
                              bool pillar, const std::vector<Box7>& boxes,
                              double sigma, double delta1) {
  check(sigma > 0.0, "compute_heatmap: sigma must be positive");
  const std::size_t n = centers.size();
  HeatmapTarget t;
  t.h.assign(n, 0.0);
  t.mask.assign(n, 0);

  std::vector<std::size_t> inside;
  for (const Box7& b : boxes) {
    inside.clear();
    double d_min = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (!site_in_box(centers[i], b, pillar)) continue;
      inside.push_back(i);
      d_min = std::min(d_min, site_distance(centers[i], b, pillar));
    }
    for (std::size_t i : inside) {
      const double d = site_distance(centers[i], b, pillar);
      const double v = std::exp(-(d - d_min) / (sigma * sigma));
      t.h[i] = std::max(t.h[i], v);
    }
  }
  for (std::size_t i = 0; i < n; ++i) t.mask[i] = t.h[i] > delta1 ? 1 : 0;
  return t;
}

std::pair<int, double> heading_to_bin(double theta, int num_bins) {
  check(num_bins > 0, "heading_to_bin: num_bins must be positive");
  const double width = kTwoPi / num_bins;
  const double t = wrap_angle(theta);
  int bin = static_cast<int>(std::floor((t + kPi) / width));
  bin = std::clamp(bin, 0, num_bins - 1);
  const double center = -kPi + (bin + 0.5) * width;
  return {bin, t - center};
}

double bin_to_heading(int bin, double residual, int num_bins) {
  check(bin >= 0 && bin < num_bins, "bin_to_heading: bin out of range");
  const double width = kTwoPi / num_bins;
  return wrap_angle(-kPi + (bin + 0.5) * width + residual);
}

RegressionTargets encode_targets(const std::vector<std::array<double, 3>>& centers,
                                 bool pillar, const std::vector<Box7>& boxes,
                                 const HeatmapTarget& target, int num_bins) {
  check(target.h.size() == centers.size() && target.mask.size() == centers.size(),
        "encode_targets: target size mismatch");
  RegressionTargets out;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!target.mask[i]) continue;
    int best = -1;
    double best_d = kInf;
    for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
      if (!site_in_box(centers[i], boxes[bi], pillar)) continue;
      const double d = site_distance(centers[i], boxes[bi], pillar);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(bi);
      }
    }
    check(best >= 0, "encode_targets: masked site inside no box");
    const Box7& b = boxes[static_cast<std::size_t>(best)];
    const auto& v = centers[i];
    std::array<double, 6> reg;
    reg[0] = b.cx - v[0];
    reg[1] = b.cy - v[1];
    reg[2] = pillar ? b.cz : b.cz - v[2];
    reg[3] = b.l;
    reg[4] = b.w;
    reg[5] = b.h;
    const auto [bin, residual] = heading_to_bin(b.theta, num_bins);
    out.site.push_back(static_cast<int>(i));
    out.box.push_back(reg);
    out.bin.push_back(bin);
    out.residual.push_back(residual);
    out.target_box.push_back(b);
  }
  return out;
}

HeatmapLoss loss_heatmap(const std::vector<double>& logits,
                         const std::vector<double>& target_h, double alpha,
                         double beta, double eps) {
  check(logits.size() == target_h.size(), "loss_heatmap: size mismatch");
  std::size_t positives = 0;
  for (double h : target_h)
    if (h > 1.0 - eps) ++positives;
  check(positives > 0, "loss_heatmap: no positive sites");

  HeatmapLoss out;
  out.grad.assign(logits.size(), 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    const double q = sigmoid(x);
    const double log_q = log_sigmoid(x);
    const double log_1q = log_sigmoid(-x);
    const double h = target_h[i];
    if (h > 1.0 - eps) {
      const double pa = std::pow(1.0 - q, alpha);
      out.loss += -pa * log_q;
      out.grad[i] = alpha * q * pa * log_q - pa * (1.0 - q);
    } else {
      const double hb = std::pow(1.0 - h, beta);
      const double qa = std::pow(q, alpha);
      out.loss += -hb * qa * log_1q;
      out.grad[i] = hb * (qa * q - alpha * qa * (1.0 - q) * log_1q);
    }
  }
  const double inv = 1.0 / static_cast<double>(positives);
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

std::pair<double, double> smooth_l1(double e) {
  const double a = std::fabs(e);
  if (a <= 1.0) return {0.5 * e * e, e};
  return {a - 0.5, e > 0.0 ? 1.0 : -1.0};
}

BinLoss loss_bin_heading(const std::vector<double>& bin_logits,
                         const std::vector<double>& bin_residuals,
                         double target_theta, int num_bins) {
  check(static_cast<int>(bin_logits.size()) == num_bins &&
            static_cast<int>(bin_residuals.size()) == num_bins,
        "loss_bin_heading: size mismatch");
  const auto [bin, target_residual] = heading_to_bin(target_theta, num_bins);

  double m = bin_logits[0];
  for (double v : bin_logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : bin_logits) sum += std::exp(v - m);
  const double lse = m + std::log(sum);

  BinLoss out;
  out.grad_logits.resize(num_bins);
  out.grad_residuals.assign(num_bins, 0.0);
  for (int j = 0; j < num_bins; ++j) {
    const double p = std::exp(bin_logits[j] - m) / sum;
    out.grad_logits[j] = p - (j == bin ? 1.0 : 0.0);
  }

  // Residual error measured in half-bin-width units.
  const double half_width = kPi / num_bins;
  const double e = (bin_residuals[bin] - target_residual) / half_width;
  const auto [sl, dsl] = smooth_l1(e);
  out.grad_residuals[bin] = dsl / half_width;
  out.loss = (lse - bin_logits[bin]) + sl;
  return out;
}

BoxLoss loss_box(const HeadOutput& pred, const RegressionTargets& targets,
                 const std::vector<std::array<double, 3>>& centers, bool pillar,
                 bool include_iou) {
  const std::size_t n = pred.size();
  const int nb = pred.num_bins;
  check(centers.size() == n, "loss_box: centers size mismatch");
  check(!targets.site.empty(), "loss_box: no masked sites");

  BoxLoss out;
  out.grad_box.assign(n, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  out.grad_bin_logits.assign(n * nb, 0.0);
  out.grad_bin_residuals.assign(n * nb, 0.0);

  std::vector<double> site_logits(nb), site_residuals(nb);
  for (std::size_t m = 0; m < targets.site.size(); ++m) {
    const std::size_t i = static_cast<std::size_t>(targets.site[m]);
    check(i < n, "loss_box: site index out of range");

    double site_loss = 0.0;
    for (int d = 0; d < 6; ++d) {
      const auto [v, g] = smooth_l1(pred.box_params[i][d] - targets.box[m][d]);
      site_loss += v;
      out.grad_box[i][d] = g;
    }

    for (int j = 0; j < nb; ++j) {
      site_logits[j] = pred.bin_logits[i * nb + j];
      site_residuals[j] = pred.bin_residuals[i * nb + j];
    }
    const BinLoss bl =
        loss_bin_heading(site_logits, site_residuals, targets.target_box[m].theta, nb);
    site_loss += bl.loss;
    for (int j = 0; j < nb; ++j) {
      out.grad_bin_logits[i * nb + j] = bl.grad_logits[j];
      out.grad_bin_residuals[i * nb + j] = bl.grad_residuals[j];
    }

    if (include_iou) {
      int best = 0;
      for (int j = 1; j < nb; ++j)
        if (site_logits[j] > site_logits[best]) best = j;
      Box7 pb;
      pb.cx = centers[i][0] + pred.box_params[i][0];
      pb.cy = centers[i][1] + pred.box_params[i][1];
      pb.cz = pillar ? pred.box_params[i][2] : centers[i][2] + pred.box_params[i][2];
      pb.l = std::max(pred.box_params[i][3], 1e-3);
      pb.w = std::max(pred.box_params[i][4], 1e-3);
      pb.h = std::max(pred.box_params[i][5], 1e-3);
      pb.theta = bin_to_heading(best, site_residuals[best], nb);
      site_loss += iou_loss(pb, targets.target_box[m]);
    }
    out.loss += site_loss;
  }

  const double inv = 1.0 / static_cast<double>(targets.site.size());
  out.loss *= inv;
  for (auto& g : out.grad_box)
    for (double& v : g) v *= inv;
  for (double& v : out.grad_bin_logits) v *= inv;
  for (double& v : out.grad_bin_residuals) v *= inv;
  return out;
}

double loss_total(double seg, double heatmap, double box, double lambda1,
                  double lambda2) {
  return lambda1 * seg + lambda2 * heatmap + box;
}

std::vector<Detection> decode(const HeadOutput& head,
                              const std::vector<Coord>& coords,
                              const std::vector<std::array<double, 3>>& centers,
                              int dims, bool pillar, double delta2,
                              int class_id) {
  const std::size_t n = head.size();
  check(coords.size() == n && centers.size() == n, "decode: size mismatch");
  check(dims == 2 || dims == 3, "decode: dims must be 2 or 3");

  std::map<Coord, std::size_t> candidates;
  std::vector<double> score(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = sigmoid(head.heatmap_logits[i]);
    if (score[i] > delta2) candidates.emplace(coords[i], i);
  }

  const int zmin = dims == 3 ? -1 : 0;
  const int zmax = dims == 3 ? 1 : 0;
  std::vector<Detection> out;
  for (const auto& [c, i] : candidates) {
    bool keep = true;
    for (int dx = -1; dx <= 1 && keep; ++dx)
      for (int dy = -1; dy <= 1 && keep; ++dy)
        for (int dz = zmin; dz <= zmax && keep; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Coord nc{c[0] + dx, c[1] + dy, c[2] + dz};
          const auto it = candidates.find(nc);
          if (it == candidates.end()) continue;
          const double sv = score[it->second];
          if (sv > score[i] || (sv == score[i] && nc < c)) keep = false;
        }
    if (!keep) continue;

    const int nb = head.num_bins;
    int best = 0;
    for (int j = 1; j < nb; ++j)
      if (head.bin_logits[i * nb + j] > head.bin_logits[i * nb + best]) best = j;

    Detection det;
    det.box.cx = centers[i][0] + head.box_params[i][0];
    det.box.cy = centers[i][1] + head.box_params[i][1];
    det.box.cz = pillar ? head.box_params[i][2] : centers[i][2] + head.box_params[i][2];
    det.box.l = std::max(head.box_params[i][3], 1e-6);
    det.box.w = std::max(head.box_params[i][4], 1e-6);
    det.box.h = std::max(head.box_params[i][5], 1e-6);
    det.box.theta = bin_to_heading(best, head.bin_residuals[i * nb + best], nb);
    det.score = score[i];
    det.class_id = class_id;
    out.push_back(det);
  }
  return out;
}

}  // namespace rsn
