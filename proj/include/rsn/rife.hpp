#pragma once

// Range-image feature extractor: dense 2D convs with circular horizontal
// padding (azimuth is periodic), resnet blocks, and a U-Net that emits a
// per-pixel segmentation logit plus feature channels at full resolution.

#include <optional>

#include "rsn/core.hpp"
#include "rsn/weights_io.hpp"

namespace rsn {

struct Conv2D {
  Tensor kernel;  // (kh, kw, cin, cout), odd kh/kw
  Tensor bias;    // (cout)
  int stride = 1;
};

/// Cross-correlation with SAME padding: zeros above/below, wrap-around
/// left/right. Output spatial dims are ceil(in / stride).
DenseTensor conv2d_forward(const DenseTensor& input, const Conv2D& conv);

/// Align-corners-false 2x upsampling; columns wrap, rows clamp.
DenseTensor bilinear_upsample_2x(const DenseTensor& input);

DenseTensor relu(DenseTensor t);

// Two 3x3 convs with a skip: identity when stride 1 and channels match,
// else a strided 1x1 projection. Output = relu(conv2(relu(conv1(x))) + skip).
struct ResnetBlock {
  Conv2D conv1;  // stride s
  Conv2D conv2;  // stride 1
  std::optional<Conv2D> proj;
};

DenseTensor resnet_forward(const DenseTensor& input, const ResnetBlock& block);

struct UNetBlockCfg {
  int layers = 1;
  int channels = 16;
};

// Down path: each block's first resnet has stride 2. Up path: 1x1 conv,
// bilinear 2x upsample, concat of the matching-resolution down tensor, then
// stride-1 resnets. The last up block's skip is the raw network input, so
// |up| == |down| restores full resolution.
struct UNetConfig {
  std::vector<UNetBlockCfg> down{{1, 16}, {2, 32}, {2, 64}};
  std::vector<UNetBlockCfg> up{{2, 32}, {2, 16}, {2, 16}};
  int feature_channels = 16;
  int in_channels = 3;

  void validate() const;
};

struct UNetWeights {
  struct UpBlock {
    Conv2D pre;  // 1x1 before upsampling
    std::vector<ResnetBlock> res;
  };
  std::vector<std::vector<ResnetBlock>> down;
  std::vector<UpBlock> up;
  Conv2D head;  // 1x1 -> 1 + feature_channels
};

UNetWeights init_unet(const UNetConfig& cfg, Rng& rng);

/// Checkpoint plumbing; tensors are stored under "<prefix>.<path>".
void unet_to_store(const std::string& prefix, const UNetWeights& w,
                   WeightStore& store);
UNetWeights unet_from_store(const std::string& prefix, const UNetConfig& cfg,
                            const WeightStore& store);

struct RifeOutput {
  int height = 0, width = 0;
  int feature_channels = 0;
  std::vector<double> seg_logits;  // h*w
  DenseTensor features;            // (h, w, feature_channels)
};

/// Full U-Net pass. Requires H and W divisible by 2^|down|.
RifeOutput unet_forward(const DenseTensor& image, const UNetConfig& cfg,
                        const UNetWeights& weights);

}  // namespace rsn
