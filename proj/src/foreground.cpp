#include "rsn/foreground.hpp"

#include <cmath>

namespace rsn {

namespace {

inline double softplus(double z) {
  // log(1 + exp(z)) without overflow.
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

SegLoss focal_loss_seg(const std::vector<double>& logits,
                       const std::vector<std::uint8_t>& labels,
                       const std::vector<std::uint8_t>& valid,
                       double focal_alpha, double focal_gamma) {
  check(logits.size() == labels.size() && logits.size() == valid.size(),
        "focal loss: size mismatch");
  check(focal_alpha > 0.0 && focal_alpha < 1.0, "focal loss: alpha outside (0,1)");
  check(focal_gamma >= 0.0, "focal loss: negative gamma");

  SegLoss out;
  out.grad.assign(logits.size(), 0.0);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!valid[i]) continue;
    ++count;
    const double x = logits[i];
    check(std::isfinite(x), "focal loss: non-finite logit");
    const double p = sigmoid(x);
    const double log_p = -softplus(-x);      // log sigmoid(x)
    const double log_1p = -softplus(x);      // log sigmoid(-x)
    if (labels[i]) {
      const double q = 1.0 - p;
      total += -focal_alpha * std::pow(q, focal_gamma) * log_p;
      // d/dx of the line above.
      out.grad[i] = focal_alpha * std::pow(q, focal_gamma) *
                    (focal_gamma * p * log_p - q);
    } else {
      total += -(1.0 - focal_alpha) * std::pow(p, focal_gamma) * log_1p;
      out.grad[i] = (1.0 - focal_alpha) * std::pow(p, focal_gamma) *
                    (p - focal_gamma * (1.0 - p) * log_1p);
    }
  }
  check(count > 0, "focal loss: no valid pixels");
  const double inv = 1.0 / static_cast<double>(count);
  out.loss = total * inv;
  for (auto& g : out.grad) g *= inv;
  return out;
}

std::vector<ForegroundPoint> select_foreground(const RifeOutput& rife,
                                               const RangeImage& img,
                                               double gamma) {
  check(gamma >= 0.0 && gamma <= 1.0, "select: gamma outside [0, 1]");
  check(rife.height == img.height && rife.width == img.width,
        "select: output/image shape mismatch");
  std::vector<ForegroundPoint> out;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const int idx = img.index(i, j);
      if (!img.valid[idx]) continue;
      const double score = sigmoid(rife.seg_logits[idx]);
      if (!(score > gamma)) continue;  // strict threshold
      ForegroundPoint fp;
      fp.position = unproject(img, i, j);
      fp.range_feature.resize(rife.feature_channels);
      for (int c = 0; c < rife.feature_channels; ++c)
        fp.range_feature[c] = rife.features.at(i, j, c);
      fp.row = i;
      fp.col = j;
      fp.score = score;
      out.push_back(std::move(fp));
    }
  }
  return out;
}

SelectionQuality recall_precision(const std::vector<int>& selected_pixels,
                                  const std::vector<std::uint8_t>& labels) {
  std::size_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  std::size_t tp = 0;
  for (int idx : selected_pixels) {
    check(idx >= 0 && idx < static_cast<int>(labels.size()),
          "recall_precision: pixel index out of range");
    tp += labels[idx] ? 1 : 0;
  }
  SelectionQuality q;
  if (positives > 0)
    q.recall = static_cast<double>(tp) / static_cast<double>(positives);
  if (!selected_pixels.empty())
    q.precision = static_cast<double>(tp) / static_cast<double>(selected_pixels.size());
  return q;
}

}  // namespace rsn
