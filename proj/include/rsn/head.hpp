#pragma once

// Sparse center-heatmap detection head: per-site predictions from backbone
// features, heatmap/box/heading targets and losses (analytic gradients for
// everything except the forward-only IoU term), and the local-max decoder.

#include "rsn/geometry.hpp"
#include "rsn/sparse_engine.hpp"

namespace rsn {

struct HeadWeights {
  Tensor kernel;  // (cin, 7 + 2 * num_bins): logit, 6 box params, bins, residuals
  Tensor bias;
};

HeadWeights init_head(int in_channels, int num_bins, Rng& rng);
void head_to_store(const std::string& prefix, const HeadWeights& w,
                   WeightStore& store);
HeadWeights head_from_store(const std::string& prefix, int in_channels,
                            int num_bins, const WeightStore& store);

// Per-site predictions. Box params are (dx, dy, dz, l, w, h); dz is an
// absolute z center in pillar mode and a z offset in 3D mode.
struct HeadOutput {
  int num_bins = 0;
  std::vector<double> heatmap_logits;            // n
  std::vector<std::array<double, 6>> box_params; // n
  std::vector<double> bin_logits;                // n * num_bins
  std::vector<double> bin_residuals;             // n * num_bins

  std::size_t size() const { return heatmap_logits.size(); }
};

/// Single fully connected layer over per-site features.
HeadOutput head_forward(const SparseTensor& features, const HeadWeights& w,
                        int num_bins);

struct HeatmapTarget {
  std::vector<double> h;
  std::vector<std::uint8_t> mask;  // h > delta1
};

/// h(site) = max over containing boxes of exp(-(d - d_min) / sigma^2) where
/// d is the site-to-center distance and d_min the smallest such distance
/// among that box's contained sites; sites inside no box get 0. Distances
/// and containment are BEV quantities in pillar mode, 3D otherwise.
HeatmapTarget compute_heatmap(const std::vector<std::array<double, 3>>& centers,
                              bool pillar, const std::vector<Box7>& boxes,
                              double sigma, double delta1);

/// Bin index and in-bin residual for a heading; bin edges sit at
/// -pi + k * (2*pi / num_bins).
std::pair<int, double> heading_to_bin(double theta, int num_bins);
double bin_to_heading(int bin, double residual, int num_bins);

// Targets for masked sites only, site indices ascending.
struct RegressionTargets {
  std::vector<int> site;
  std::vector<std::array<double, 6>> box;
  std::vector<int> bin;
  std::vector<double> residual;
  std::vector<Box7> target_box;  // the assigned box, for the IoU term
};

/// Assigns each masked site its containing box (nearest center on ties).
RegressionTargets encode_targets(const std::vector<std::array<double, 3>>& centers,
                                 bool pillar, const std::vector<Box7>& boxes,
                                 const HeatmapTarget& target, int num_bins);

struct HeatmapLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Penalty-reduced focal loss over sites, normalized by the count of sites
/// with target h > 1 - eps (error if that count is zero).
HeatmapLoss loss_heatmap(const std::vector<double>& logits,
                         const std::vector<double>& target_h, double alpha = 2.0,
                         double beta = 4.0, double eps = 1e-3);

/// Value and derivative of elementwise smooth L1.
std::pair<double, double> smooth_l1(double e);

struct BinLoss {
  double loss = 0.0;
  std::vector<double> grad_logits;
  std::vector<double> grad_residuals;
};

/// Cross-entropy over bins plus smooth L1 on the true bin's residual error
/// normalized by the half bin width.
BinLoss loss_bin_heading(const std::vector<double>& bin_logits,
                         const std::vector<double>& bin_residuals,
                         double target_theta, int num_bins);

struct BoxLoss {
  double loss = 0.0;
  std::vector<std::array<double, 6>> grad_box;  // aligned with HeadOutput
  std::vector<double> grad_bin_logits;
  std::vector<double> grad_bin_residuals;
};

/// Mean over masked sites of smooth L1 on the six box params, the heading
/// bin loss, and (forward value only) 1 - IoU3D of the decoded box.
BoxLoss loss_box(const HeadOutput& pred, const RegressionTargets& targets,
                 const std::vector<std::array<double, 3>>& centers, bool pillar,
                 bool include_iou = true);

/// lambda1 * seg + lambda2 * heatmap + box.
double loss_total(double seg, double heatmap, double box, double lambda1 = 400.0,
                  double lambda2 = 4.0);

/// NMS-free decode: candidates are sites with sigmoid(logit) > delta2; a
/// candidate survives if no candidate in its 3x3(x3) neighborhood beats it
/// (ties keep the lexicographically smallest coordinate). Emitted in
/// coordinate order.
std::vector<Detection> decode(const HeadOutput& head,
                              const std::vector<Coord>& coords,
                              const std::vector<std::array<double, 3>>& centers,
                              int dims, bool pillar, double delta2,
                              int class_id);

}  // namespace rsn
