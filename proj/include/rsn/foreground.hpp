#pragma once

// Foreground selection on segmented range images: the focal segmentation
// loss (with analytic gradient) and the score-thresholded pixel gather.

#include <optional>

#include "rsn/range_image.hpp"
#include "rsn/rife.hpp"

namespace rsn {

struct SegLoss {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(logit), zero on invalid pixels
};

/// Alpha-balanced sigmoid focal loss averaged over valid pixels. Throws if
/// no pixel is valid.
SegLoss focal_loss_seg(const std::vector<double>& logits,
                       const std::vector<std::uint8_t>& labels,
                       const std::vector<std::uint8_t>& valid,
                       double focal_alpha = 0.25, double focal_gamma = 2.0);

struct ForegroundPoint {
  Point3 position;
  std::vector<double> range_feature;
  int row = 0, col = 0;
  int frame_index = 0;
  double score = 0.0;
};

/// Gather pixels with sigmoid(logit) strictly above gamma, in row-major
/// (row, col) order. Carries the unprojected position and the pixel's
/// feature vector.
std::vector<ForegroundPoint> select_foreground(const RifeOutput& rife,
                                               const RangeImage& img,
                                               double gamma);

struct SelectionQuality {
  std::optional<double> recall;     // absent when there are no positives
  std::optional<double> precision;  // absent when nothing was selected
};

SelectionQuality recall_precision(const std::vector<int>& selected_pixels,
                                  const std::vector<std::uint8_t>& labels);

}  // namespace rsn
