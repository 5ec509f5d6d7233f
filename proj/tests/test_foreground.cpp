#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rsn/foreground.hpp"

using namespace rsn;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Direct focal loss evaluation used as the finite-difference target.
double focal_value(const std::vector<double>& logits,
                   const std::vector<std::uint8_t>& labels,
                   const std::vector<std::uint8_t>& valid, double alpha,
                   double gamma) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!valid[i]) continue;
    ++n;
    const double p = sigmoid(logits[i]);
    if (labels[i])
      sum += -alpha * std::pow(1.0 - p, gamma) * std::log(p);
    else
      sum += -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
  }
  return sum / n;
}

RifeOutput make_rife(int h, int w, int f) {
  RifeOutput r;
  r.height = h;
  r.width = w;
  r.feature_channels = f;
  r.seg_logits.assign(static_cast<std::size_t>(h) * w, 0.0);
  r.features = DenseTensor({h, w, f});
  return r;
}

RangeImage make_image(int h, int w) {
  RangeImage img;
  img.height = h;
  img.width = w;
  img.inclinations = uniform_inclinations(h);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  img.range.assign(n, 0.0);
  img.intensity.assign(n, 0.0);
  img.elongation.assign(n, 0.0);
  img.valid.assign(n, 0);
  return img;
}

}  // namespace

TEST_CASE("focal loss frozen values at logit zero") {
  // p = 1/2 makes every factor a power of two times log 2.
  const double ln2 = std::log(2.0);
  SegLoss pos = focal_loss_seg({0.0}, {1}, {1});
  CHECK(pos.loss == doctest::Approx(0.25 * 0.25 * ln2).epsilon(1e-12));
  SegLoss neg = focal_loss_seg({0.0}, {0}, {1});
  CHECK(neg.loss == doctest::Approx(0.75 * 0.25 * ln2).epsilon(1e-12));

  // Mean over valid pixels only; invalid pixels contribute nothing.
  SegLoss mix = focal_loss_seg({0.0, 0.0, 50.0}, {1, 0, 1}, {1, 1, 0});
  CHECK(mix.loss == doctest::Approx(0.5 * (0.25 * 0.25 * ln2 + 0.75 * 0.25 * ln2)));
  CHECK(mix.grad.size() == 3);
  CHECK(mix.grad[2] == 0.0);

  CHECK_THROWS(focal_loss_seg({0.0}, {1}, {0}));  // nothing valid
}

TEST_CASE("focal loss is finite at extreme logits") {
  for (double x : {-40.0, -15.0, 15.0, 40.0}) {
    const SegLoss a = focal_loss_seg({x}, {1}, {1});
    CHECK(std::isfinite(a.loss));
    CHECK(std::isfinite(a.grad[0]));
    const SegLoss b = focal_loss_seg({x}, {0}, {1});
    CHECK(std::isfinite(b.loss));
    CHECK(std::isfinite(b.grad[0]));
  }
  // Confident correct predictions cost almost nothing.
  CHECK(focal_loss_seg({30.0}, {1}, {1}).loss < 1e-10);
  CHECK(focal_loss_seg({-30.0}, {0}, {1}).loss < 1e-10);
}

TEST_CASE("focal loss gradient matches finite differences") {
  Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = rng.uniform_int(1, 8);
    std::vector<double> logits(n);
    std::vector<std::uint8_t> labels(n), valid(n);
    bool any = false;
    for (int i = 0; i < n; ++i) {
      logits[static_cast<std::size_t>(i)] = rng.uniform(-3.0, 3.0);
      labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.5;
      valid[static_cast<std::size_t>(i)] = rng.uniform() < 0.8;
      any = any || valid[static_cast<std::size_t>(i)];
    }
    if (!any) valid[0] = 1;

    const double alpha = 0.25, gamma = 2.0;
    const SegLoss out = focal_loss_seg(logits, labels, valid, alpha, gamma);
    CHECK(out.loss == doctest::Approx(focal_value(logits, labels, valid, alpha, gamma))
                          .epsilon(1e-12));
    const double worst = testutil::max_fd_rel_err(
        [&](const std::vector<double>& x) {
          return focal_value(x, labels, valid, alpha, gamma);
        },
        logits, out.grad);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("selection threshold is strict") {
  RifeOutput rife = make_rife(1, 3, 2);
  RangeImage img = make_image(1, 3);
  for (int c = 0; c < 3; ++c) {
    img.valid[static_cast<std::size_t>(c)] = 1;
    img.range[static_cast<std::size_t>(c)] = 10.0;
  }
  rife.seg_logits = {0.0, 0.1, -0.1};  // sigmoid: 0.5, above, below

  const auto sel = select_foreground(rife, img, 0.5);
  REQUIRE(sel.size() == 1);  // sigmoid(0) == gamma exactly: excluded
  CHECK(sel[0].col == 1);
  CHECK(sel[0].score == doctest::Approx(sigmoid(0.1)));

  const auto all = select_foreground(rife, img, 0.0);
  CHECK(all.size() == 3);
  const auto none = select_foreground(rife, img, 1.0);
  CHECK(none.empty());
}

TEST_CASE("selection skips invalid pixels and keeps row major order") {
  Rng rng(43);
  RifeOutput rife = make_rife(4, 6, 3);
  RangeImage img = make_image(4, 6);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) {
      const int idx = img.index(r, c);
      img.valid[idx] = rng.uniform() < 0.7;
      img.range[idx] = rng.uniform(5.0, 50.0);
      rife.seg_logits[static_cast<std::size_t>(idx)] = rng.uniform(-2.0, 2.0);
      for (int f = 0; f < 3; ++f) rife.features.at(r, c, f) = rng.uniform(-1.0, 1.0);
    }

  const auto sel = select_foreground(rife, img, 0.3);
  int prev = -1;
  for (const auto& p : sel) {
    const int idx = img.index(p.row, p.col);
    CHECK(idx > prev);  // strictly ascending row-major order
    prev = idx;
    CHECK(img.valid[idx] == 1);
    CHECK(sigmoid(rife.seg_logits[static_cast<std::size_t>(idx)]) > 0.3);

    // Position is the unprojection, features come from the same pixel.
    const Point3 u = unproject(img, p.row, p.col);
    CHECK(p.position.x == u.x);
    CHECK(p.position.y == u.y);
    CHECK(p.position.z == u.z);
    REQUIRE(p.range_feature.size() == 3);
    for (int f = 0; f < 3; ++f) CHECK(p.range_feature[static_cast<std::size_t>(f)] ==
                                      rife.features.at(p.row, p.col, f));
    CHECK(p.frame_index == 0);
  }

  // Lower thresholds can only grow the selection.
  const auto wide = select_foreground(rife, img, 0.1);
  CHECK(wide.size() >= sel.size());
  std::size_t j = 0;
  for (const auto& p : wide) {
    if (j < sel.size() && sel[j].row == p.row && sel[j].col == p.col) ++j;
  }
  CHECK(j == sel.size());  // subset property
}

TEST_CASE("recall precision bookkeeping") {
  std::vector<std::uint8_t> labels = {1, 1, 0, 0};

  const SelectionQuality q = recall_precision({0, 2}, labels);
  REQUIRE(q.recall.has_value());
  REQUIRE(q.precision.has_value());
  CHECK(*q.recall == doctest::Approx(0.5));
  CHECK(*q.precision == doctest::Approx(0.5));

  const SelectionQuality empty = recall_precision({}, labels);
  CHECK_FALSE(empty.precision.has_value());
  REQUIRE(empty.recall.has_value());
  CHECK(*empty.recall == 0.0);

  const SelectionQuality nopos = recall_precision({2}, {0, 0, 0});
  CHECK_FALSE(nopos.recall.has_value());
  REQUIRE(nopos.precision.has_value());
  CHECK(*nopos.precision == 0.0);

  const SelectionQuality perfect = recall_precision({0, 1}, labels);
  CHECK(*perfect.recall == 1.0);
  CHECK(*perfect.precision == 1.0);
}
