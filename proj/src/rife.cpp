#include "rsn/rife.hpp"

#include <cmath>

namespace rsn {

DenseTensor conv2d_forward(const DenseTensor& input, const Conv2D& conv) {
  check(input.shape.size() == 3, "conv2d: input must be (h, w, c)");
  check(conv.kernel.shape.size() == 4, "conv2d: kernel must be (kh, kw, cin, cout)");
  const int h = input.shape[0], w = input.shape[1], cin = input.shape[2];
  const int kh = conv.kernel.shape[0], kw = conv.kernel.shape[1];
  const int kcin = conv.kernel.shape[2], cout = conv.kernel.shape[3];
  check(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel dims must be odd");
  check(kcin == cin, "conv2d: channel mismatch");
  check(conv.bias.shape == std::vector<int>{cout}, "conv2d: bias shape mismatch");
  const int s = conv.stride;
  check(s == 1 || s == 2, "conv2d: stride must be 1 or 2");

  const int oh = (h + s - 1) / s, ow = (w + s - 1) / s;
  const int ph = kh / 2, pw = kw / 2;
  DenseTensor out({oh, ow, cout});
  const double* K = conv.kernel.data.data();
  std::vector<double> acc(cout);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int co = 0; co < cout; ++co) acc[co] = conv.bias.data[co];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * s + ky - ph;
        if (iy < 0 || iy >= h) continue;  // vertical zero padding
        for (int kx = 0; kx < kw; ++kx) {
          int ix = (ox * s + kx - pw) % w;  // horizontal wrap
          if (ix < 0) ix += w;
          const double* kcol = K + ((static_cast<std::size_t>(ky) * kw + kx) * cin) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double v = input.at(iy, ix, ci);
            const double* krow = kcol + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) acc[co] += v * krow[co];
          }
        }
      }
      for (int co = 0; co < cout; ++co) out.at(oy, ox, co) = acc[co];
    }
  }
  return out;
}

DenseTensor relu(DenseTensor t) {
  for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
  return t;
}

namespace {

inline double lerp_exact(double a, double b, double f) {
  return a + f * (b - a);  // constant inputs stay bitwise constant
}

}  // namespace

DenseTensor bilinear_upsample_2x(const DenseTensor& input) {
  check(input.shape.size() == 3, "upsample: input must be (h, w, c)");
  const int h = input.shape[0], w = input.shape[1], c = input.shape[2];
  DenseTensor out({2 * h, 2 * w, c});
  for (int oy = 0; oy < 2 * h; ++oy) {
    const double sy = (oy + 0.5) * 0.5 - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    int y1 = y0 + 1;
    if (y0 < 0) y0 = 0;          // rows clamp
    if (y1 > h - 1) y1 = h - 1;
    for (int ox = 0; ox < 2 * w; ++ox) {
      const double sx = (ox + 0.5) * 0.5 - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      int x1 = x0 + 1;
      x0 = ((x0 % w) + w) % w;    // columns wrap (azimuth periodic)
      x1 = ((x1 % w) + w) % w;
      for (int ch = 0; ch < c; ++ch) {
        const double top = lerp_exact(input.at(y0, x0, ch), input.at(y0, x1, ch), fx);
        const double bot = lerp_exact(input.at(y1, x0, ch), input.at(y1, x1, ch), fx);
        out.at(oy, ox, ch) = lerp_exact(top, bot, fy);
      }
    }
  }
  return out;
}

DenseTensor resnet_forward(const DenseTensor& input, const ResnetBlock& block) {
  const int cin = input.shape[2];
  const int cout = block.conv2.kernel.shape[3];
  const bool need_proj = block.conv1.stride != 1 || cin != cout;
  check(need_proj == block.proj.has_value(),
        "resnet: projection present iff stride != 1 or channel change");
  DenseTensor y = conv2d_forward(input, block.conv1);
  y = relu(std::move(y));
  y = conv2d_forward(y, block.conv2);
  DenseTensor skip = block.proj ? conv2d_forward(input, *block.proj) : input;
  check(skip.shape == y.shape, "resnet: skip shape mismatch");
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += skip.data[i];
  return relu(std::move(y));
}

void UNetConfig::validate() const {
  check(!down.empty(), "unet config: need at least one down block");
  check(up.size() == down.size(), "unet config: |up| must equal |down|");
  for (const auto& b : down)
    check(b.layers >= 1 && b.channels >= 1, "unet config: bad down block");
  for (const auto& b : up)
    check(b.layers >= 1 && b.channels >= 1, "unet config: bad up block");
  check(feature_channels >= 1, "unet config: need feature channels");
  check(in_channels >= 1, "unet config: need input channels");
}

namespace {

Conv2D init_conv(int kh, int kw, int cin, int cout, int stride, Rng& rng) {
  Conv2D c;
  c.stride = stride;
  c.kernel = init_uniform({kh, kw, cin, cout}, kh * kw * cin, rng);
  c.bias = init_uniform({cout}, kh * kw * cin, rng);
  return c;
}

ResnetBlock init_resnet(int cin, int cout, int stride, Rng& rng) {
  ResnetBlock b;
  b.conv1 = init_conv(3, 3, cin, cout, stride, rng);
  b.conv2 = init_conv(3, 3, cout, cout, 1, rng);
  if (stride != 1 || cin != cout) b.proj = init_conv(1, 1, cin, cout, stride, rng);
  return b;
}

// Channel bookkeeping shared by init and store loading. skip_channels[j] is
// the concat width for up block j (matching down tensor, input for the last).
struct UNetPlan {
  std::vector<int> down_in;   // input channels of each down block
  std::vector<int> up_in;     // channels entering each up block's 1x1
  std::vector<int> skip;      // skip channels per up block
};

UNetPlan plan_unet(const UNetConfig& cfg) {
  UNetPlan p;
  const int n = static_cast<int>(cfg.down.size());
  int ch = cfg.in_channels;
  std::vector<int> level_ch;   // channels of t_0 .. t_{n-1}
  level_ch.push_back(ch);
  for (int i = 0; i < n; ++i) {
    p.down_in.push_back(ch);
    ch = cfg.down[i].channels;
    level_ch.push_back(ch);
  }
  for (int j = 0; j < n; ++j) {
    p.up_in.push_back(ch);
    p.skip.push_back(level_ch[n - 1 - j]);
    ch = cfg.up[j].channels;
  }
  return p;
}

}  // namespace

UNetWeights init_unet(const UNetConfig& cfg, Rng& rng) {
  cfg.validate();
  const UNetPlan plan = plan_unet(cfg);
  UNetWeights w;
  for (std::size_t i = 0; i < cfg.down.size(); ++i) {
    std::vector<ResnetBlock> blocks;
    int cin = plan.down_in[i];
    for (int j = 0; j < cfg.down[i].layers; ++j) {
      blocks.push_back(init_resnet(cin, cfg.down[i].channels, j == 0 ? 2 : 1, rng));
      cin = cfg.down[i].channels;
    }
    w.down.push_back(std::move(blocks));
  }
  for (std::size_t j = 0; j < cfg.up.size(); ++j) {
    UNetWeights::UpBlock ub;
    ub.pre = init_conv(1, 1, plan.up_in[j], cfg.up[j].channels, 1, rng);
    int cin = cfg.up[j].channels + plan.skip[j];
    for (int l = 0; l < cfg.up[j].layers; ++l) {
      ub.res.push_back(init_resnet(cin, cfg.up[j].channels, 1, rng));
      cin = cfg.up[j].channels;
    }
    w.up.push_back(std::move(ub));
  }
  w.head = init_conv(1, 1, cfg.up.back().channels, 1 + cfg.feature_channels, 1, rng);
  return w;
}

namespace {

void conv_to_store(const std::string& name, const Conv2D& c, WeightStore& s) {
  s[name + ".k"] = c.kernel;
  s[name + ".b"] = c.bias;
}

Conv2D conv_from_store(const std::string& name, const WeightStore& s,
                       std::vector<int> kshape, int stride) {
  Conv2D c;
  c.kernel = fetch(s, name + ".k", kshape);
  c.bias = fetch(s, name + ".b", {kshape[3]});
  c.stride = stride;
  return c;
}

}  // namespace

void unet_to_store(const std::string& prefix, const UNetWeights& w,
                   WeightStore& store) {
  for (std::size_t i = 0; i < w.down.size(); ++i) {
    for (std::size_t j = 0; j < w.down[i].size(); ++j) {
      const std::string base =
          prefix + ".d" + std::to_string(i) + ".r" + std::to_string(j);
      conv_to_store(base + ".conv1", w.down[i][j].conv1, store);
      conv_to_store(base + ".conv2", w.down[i][j].conv2, store);
      if (w.down[i][j].proj) conv_to_store(base + ".proj", *w.down[i][j].proj, store);
    }
  }
  for (std::size_t i = 0; i < w.up.size(); ++i) {
    const std::string ub = prefix + ".u" + std::to_string(i);
    conv_to_store(ub + ".pre", w.up[i].pre, store);
    for (std::size_t j = 0; j < w.up[i].res.size(); ++j) {
      const std::string base = ub + ".r" + std::to_string(j);
      conv_to_store(base + ".conv1", w.up[i].res[j].conv1, store);
      conv_to_store(base + ".conv2", w.up[i].res[j].conv2, store);
      if (w.up[i].res[j].proj) conv_to_store(base + ".proj", *w.up[i].res[j].proj, store);
    }
  }
  conv_to_store(prefix + ".head", w.head, store);
}

UNetWeights unet_from_store(const std::string& prefix, const UNetConfig& cfg,
                            const WeightStore& store) {
  cfg.validate();
  const UNetPlan plan = plan_unet(cfg);
  UNetWeights w;
  for (std::size_t i = 0; i < cfg.down.size(); ++i) {
    std::vector<ResnetBlock> blocks;
    int cin = plan.down_in[i];
    const int cout = cfg.down[i].channels;
    for (int j = 0; j < cfg.down[i].layers; ++j) {
      const std::string base =
          prefix + ".d" + std::to_string(i) + ".r" + std::to_string(j);
      const int stride = j == 0 ? 2 : 1;
      ResnetBlock b;
      b.conv1 = conv_from_store(base + ".conv1", store, {3, 3, cin, cout}, stride);
      b.conv2 = conv_from_store(base + ".conv2", store, {3, 3, cout, cout}, 1);
      if (stride != 1 || cin != cout)
        b.proj = conv_from_store(base + ".proj", store, {1, 1, cin, cout}, stride);
      blocks.push_back(std::move(b));
      cin = cout;
    }
    w.down.push_back(std::move(blocks));
  }
  for (std::size_t i = 0; i < cfg.up.size(); ++i) {
    const std::string ub = prefix + ".u" + std::to_string(i);
    UNetWeights::UpBlock upb;
    const int cout = cfg.up[i].channels;
    upb.pre = conv_from_store(ub + ".pre", store, {1, 1, plan.up_in[i], cout}, 1);
    int cin = cout + plan.skip[i];
    for (int j = 0; j < cfg.up[i].layers; ++j) {
      const std::string base = ub + ".r" + std::to_string(j);
      ResnetBlock b;
      b.conv1 = conv_from_store(base + ".conv1", store, {3, 3, cin, cout}, 1);
      b.conv2 = conv_from_store(base + ".conv2", store, {3, 3, cout, cout}, 1);
      if (cin != cout)
        b.proj = conv_from_store(base + ".proj", store, {1, 1, cin, cout}, 1);
      upb.res.push_back(std::move(b));
      cin = cout;
    }
    w.up.push_back(std::move(upb));
  }
  w.head = conv_from_store(prefix + ".head", store,
                           {1, 1, cfg.up.back().channels, 1 + cfg.feature_channels}, 1);
  return w;
}

namespace {

DenseTensor concat_channels(const DenseTensor& a, const DenseTensor& b) {
  check(a.shape[0] == b.shape[0] && a.shape[1] == b.shape[1],
        "concat: spatial shape mismatch");
  DenseTensor out({a.shape[0], a.shape[1], a.shape[2] + b.shape[2]});
  for (int i = 0; i < a.shape[0]; ++i)
    for (int j = 0; j < a.shape[1]; ++j) {
      for (int c = 0; c < a.shape[2]; ++c) out.at(i, j, c) = a.at(i, j, c);
      for (int c = 0; c < b.shape[2]; ++c)
        out.at(i, j, a.shape[2] + c) = b.at(i, j, c);
    }
  return out;
}

}  // namespace

RifeOutput unet_forward(const DenseTensor& image, const UNetConfig& cfg,
                        const UNetWeights& weights) {
  cfg.validate();
  check(image.shape.size() == 3 && image.shape[2] == cfg.in_channels,
        "unet: input must be (h, w, in_channels)");
  const int n = static_cast<int>(cfg.down.size());
  const int div = 1 << n;
  check(image.shape[0] % div == 0 && image.shape[1] % div == 0,
        "unet: spatial dims must be divisible by 2^depth");
  check(weights.down.size() == cfg.down.size() && weights.up.size() == cfg.up.size(),
        "unet: weight/config block count mismatch");

  std::vector<DenseTensor> levels;  // t_0 .. t_{n-1}, inputs to each down block
  DenseTensor x = image;
  for (int i = 0; i < n; ++i) {
    levels.push_back(x);
    for (const auto& block : weights.down[i]) x = resnet_forward(x, block);
  }
  for (int j = 0; j < n; ++j) {
    x = conv2d_forward(x, weights.up[j].pre);
    x = bilinear_upsample_2x(x);
    x = concat_channels(x, levels[n - 1 - j]);
    for (const auto& block : weights.up[j].res) x = resnet_forward(x, block);
  }
  DenseTensor headout = conv2d_forward(x, weights.head);

  RifeOutput out;
  out.height = headout.shape[0];
  out.width = headout.shape[1];
  out.feature_channels = cfg.feature_channels;
  check(out.height == image.shape[0] && out.width == image.shape[1],
        "unet: output resolution mismatch");
  out.seg_logits.resize(static_cast<std::size_t>(out.height) * out.width);
  out.features = DenseTensor({out.height, out.width, cfg.feature_channels});
  for (int i = 0; i < out.height; ++i)
    for (int j = 0; j < out.width; ++j) {
      out.seg_logits[static_cast<std::size_t>(i) * out.width + j] = headout.at(i, j, 0);
      for (int c = 0; c < cfg.feature_channels; ++c)
        out.features.at(i, j, c) = headout.at(i, j, 1 + c);
    }
  return out;
}

}  // namespace rsn
