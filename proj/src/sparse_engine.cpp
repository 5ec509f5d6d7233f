#include "rsn/sparse_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

namespace rsn {

void SparseTensor::validate() const {
  check(dims == 2 || dims == 3, "sparse tensor: dims must be 2 or 3");
  check(channels > 0, "sparse tensor: need at least one channel");
  check(stride_level >= 1, "sparse tensor: bad stride level");
  check(features.size() == coords.size() * static_cast<std::size_t>(channels),
        "sparse tensor: feature size mismatch");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (dims == 2) check(coords[i][2] == 0, "sparse tensor: 2D coord with z != 0");
    if (i > 0) check(coords[i - 1] < coords[i],
                     "sparse tensor: coords must be strictly increasing");
  }
}

SparseTensor make_sparse_tensor(int dims, std::vector<Coord> coords,
                                std::vector<double> features, int channels,
                                int stride_level) {
  check(channels > 0, "sparse tensor: need at least one channel");
  check(features.size() == coords.size() * static_cast<std::size_t>(channels),
        "sparse tensor: feature size mismatch");
  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return coords[a] < coords[b]; });
  SparseTensor t;
  t.dims = dims;
  t.channels = channels;
  t.stride_level = stride_level;
  t.coords.reserve(coords.size());
  t.features.resize(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    t.coords.push_back(coords[order[i]]);
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(order[i]) * channels,
                channels, t.features.begin() + static_cast<std::ptrdiff_t>(i) * channels);
  }
  t.validate();
  return t;
}

std::size_t Rulebook::total_pairs() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.size();
  return n;
}

namespace {

// Kernel offsets in lexicographic order; 2D keeps k[2] == 0.
std::vector<Coord> kernel_offsets(int dims, int extent) {
  check(extent % 2 == 1 && extent >= 1, "rulebook: extent must be odd");
  const int r = extent / 2;
  std::vector<Coord> out;
  for (int kx = -r; kx <= r; ++kx)
    for (int ky = -r; ky <= r; ++ky) {
      if (dims == 3) {
        for (int kz = -r; kz <= r; ++kz) out.push_back({kx, ky, kz});
      } else {
        out.push_back({kx, ky, 0});
      }
    }
  return out;
}

using CoordIndex = std::map<Coord, int>;

CoordIndex index_coords(const std::vector<Coord>& coords) {
  CoordIndex m;
  for (int i = 0; i < static_cast<int>(coords.size()); ++i) m.emplace(coords[i], i);
  return m;
}

// Fill pairs for fixed output sites: input coord = stride * out - k.
void gather_pairs(Rulebook& rb, const std::vector<Coord>& offsets,
                  const CoordIndex& in_index, int stride) {
  rb.pairs.assign(offsets.size(), {});
  for (int o = 0; o < static_cast<int>(rb.out_coords.size()); ++o) {
    const Coord& oc = rb.out_coords[o];
    for (std::size_t ki = 0; ki < offsets.size(); ++ki) {
      const Coord ic{oc[0] * stride - offsets[ki][0],
                     oc[1] * stride - offsets[ki][1],
                     oc[2] * stride - offsets[ki][2]};
      const auto it = in_index.find(ic);
      if (it != in_index.end()) rb.pairs[ki].push_back({it->second, o});
    }
  }
  // Built in ascending output order with one input per (offset, output), so
  // each offset list is already sorted by (out, in).
}

}  // namespace

Rulebook build_rulebook_ssc(const SparseTensor& input, int extent) {
  input.validate();
  Rulebook rb;
  rb.dims = input.dims;
  rb.extent = extent;
  rb.stride = 1;
  rb.out_coords = input.coords;  // submanifold: site set preserved
  gather_pairs(rb, kernel_offsets(input.dims, extent), index_coords(input.coords), 1);
  return rb;
}

Rulebook build_rulebook_sc(const SparseTensor& input, int stride, int extent) {
  input.validate();
  check(stride == 1 || stride == 2, "rulebook: SC stride must be 1 or 2");
  Rulebook rb;
  rb.dims = input.dims;
  rb.extent = extent;
  rb.stride = stride;
  const auto offsets = kernel_offsets(input.dims, extent);
  std::set<Coord> outs;
  if (stride == 1) {
    // Dilation: every site reached by some offset becomes active.
    for (const auto& c : input.coords)
      for (const auto& k : offsets)
        outs.insert({c[0] + k[0], c[1] + k[1], c[2] + k[2]});
  } else {
    // o = (i + k) / 2 where the division is exact per axis.
    for (const auto& c : input.coords)
      for (const auto& k : offsets) {
        const int sx = c[0] + k[0], sy = c[1] + k[1], sz = c[2] + k[2];
        if (sx % 2 != 0 || sy % 2 != 0 || sz % 2 != 0) continue;
        outs.insert({sx / 2, sy / 2, sz / 2});
      }
  }
  rb.out_coords.assign(outs.begin(), outs.end());
  gather_pairs(rb, offsets, index_coords(input.coords), stride);
  return rb;
}

SparseTensor sparse_conv_forward(const SparseTensor& input,
                                 const SparseConvWeights& w,
                                 const Rulebook& rb) {
  input.validate();
  const int K = static_cast<int>(rb.offset_count());
  check(w.kernel.shape.size() == 3, "sparse conv: kernel must be (K, cin, cout)");
  check(w.kernel.shape[0] == K, "sparse conv: kernel offset count mismatch");
  check(w.kernel.shape[1] == input.channels, "sparse conv: cin mismatch");
  const int cout = w.kernel.shape[2];
  check(w.bias.shape == std::vector<int>{cout}, "sparse conv: bias shape mismatch");

  SparseTensor out;
  out.dims = input.dims;
  out.channels = cout;
  out.stride_level = input.stride_level * rb.stride;
  out.coords = rb.out_coords;
  out.features.resize(out.coords.size() * static_cast<std::size_t>(cout));
  for (std::size_t o = 0; o < out.coords.size(); ++o)
    std::copy(w.bias.data.begin(), w.bias.data.end(), out.feat(o));

  const int cin = input.channels;
  for (int ki = 0; ki < K; ++ki) {
    const double* Wk = w.kernel.data.data() +
                       static_cast<std::size_t>(ki) * cin * cout;
    for (const auto& [i, o] : rb.pairs[ki]) {
      const double* fin = input.feat(static_cast<std::size_t>(i));
      double* fout = out.feat(static_cast<std::size_t>(o));
      for (int a = 0; a < cin; ++a) {
        const double v = fin[a];
        const double* row = Wk + static_cast<std::size_t>(a) * cout;
        for (int b = 0; b < cout; ++b) fout[b] += v * row[b];
      }
    }
  }
  out.validate();
  return out;
}

SparseTensor sparse_max_pool(const SparseTensor& input, int window) {
  input.validate();
  check(window % 2 == 1 && window >= 1, "max pool: window must be odd");
  const auto offsets = kernel_offsets(input.dims, window);
  const CoordIndex index = index_coords(input.coords);
  SparseTensor out = input;
  for (std::size_t o = 0; o < input.size(); ++o) {
    double* fout = out.feat(o);
    std::copy_n(input.feat(o), input.channels, fout);
    for (const auto& k : offsets) {
      if (k[0] == 0 && k[1] == 0 && k[2] == 0) continue;
      const Coord nc{input.coords[o][0] + k[0], input.coords[o][1] + k[1],
                     input.coords[o][2] + k[2]};
      const auto it = index.find(nc);
      if (it == index.end()) continue;  // inactive neighbors are ignored
      const double* fn = input.feat(static_cast<std::size_t>(it->second));
      for (int c = 0; c < input.channels; ++c) fout[c] = std::max(fout[c], fn[c]);
    }
  }
  return out;
}

void SpfeConfig::validate() const {
  check(dims == 2 || dims == 3, "spfe config: dims must be 2 or 3");
  check(!blocks.empty(), "spfe config: need at least one block");
  for (const auto& b : blocks) {
    check(b.channels > 0, "spfe config: channels must be positive");
    if (b.kind == SpfeKind::SSC)
      check(b.stride == 1, "spfe config: SSC stride must be 1");
    else
      check(b.stride == 1 || b.stride == 2, "spfe config: SC stride must be 1 or 2");
  }
}

SpfeConfig SpfeConfig::preset(const std::string& name) {
  auto make = [](int dims, int ch, const std::vector<std::pair<SpfeKind, int>>& spec) {
    SpfeConfig cfg;
    cfg.dims = dims;
    for (auto [kind, stride] : spec) cfg.blocks.push_back({kind, stride, ch});
    return cfg;
  };
  const auto ssc = std::make_pair(SpfeKind::SSC, 1);
  const auto sc1 = std::make_pair(SpfeKind::SC, 1);
  const auto sc2 = std::make_pair(SpfeKind::SC, 2);
  if (name == "CarS") return make(2, 96, {ssc, ssc, ssc, ssc, sc2, ssc, ssc});
  if (name == "CarL")
    return make(2, 96, {ssc, ssc, ssc, ssc, ssc, ssc, sc2, ssc, ssc, ssc, ssc});
  if (name == "PedS") return make(2, 96, {ssc, ssc, ssc, ssc, sc1, ssc, ssc});
  if (name == "PedL")
    return make(2, 96, {ssc, ssc, ssc, ssc, ssc, ssc, sc1, ssc, ssc, ssc, ssc});
  if (name == "CarXL") return make(3, 64, {ssc, ssc, sc2, ssc, ssc, sc2, ssc, ssc});
  fail("spfe config: unknown preset " + name);
}

std::string spfe_config_to_json(const SpfeConfig& cfg) {
  cfg.validate();
  nlohmann::json j;
  j["dims"] = cfg.dims;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : cfg.blocks)
    j["blocks"].push_back({{"kind", b.kind == SpfeKind::SSC ? "SSC" : "SC"},
                           {"stride", b.stride},
                           {"channels", b.channels}});
  return j.dump(2);
}

SpfeConfig spfe_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SpfeConfig cfg;
  cfg.dims = j.at("dims").get<int>();
  for (const auto& jb : j.at("blocks")) {
    SpfeBlock b;
    const std::string kind = jb.at("kind").get<std::string>();
    check(kind == "SSC" || kind == "SC", "spfe config: kind must be SSC or SC");
    b.kind = kind == "SSC" ? SpfeKind::SSC : SpfeKind::SC;
    b.stride = jb.at("stride").get<int>();
    b.channels = jb.at("channels").get<int>();
    cfg.blocks.push_back(b);
  }
  cfg.validate();
  return cfg;
}

SpfeWeights init_spfe(const SpfeConfig& cfg, int in_channels, Rng& rng) {
  cfg.validate();
  check(in_channels > 0, "spfe: bad input channels");
  const int K = cfg.dims == 2 ? 9 : 27;
  SpfeWeights w;
  int cin = in_channels;
  for (const auto& b : cfg.blocks) {
    SparseConvWeights cw;
    cw.kernel = init_uniform({K, cin, b.channels}, K * cin, rng);
    cw.bias = init_uniform({b.channels}, K * cin, rng);
    w.blocks.push_back(std::move(cw));
    cin = b.channels;
  }
  return w;
}

void spfe_to_store(const std::string& prefix, const SpfeWeights& w,
                   WeightStore& store) {
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    store[prefix + ".b" + std::to_string(i) + ".k"] = w.blocks[i].kernel;
    store[prefix + ".b" + std::to_string(i) + ".b"] = w.blocks[i].bias;
  }
}

SpfeWeights spfe_from_store(const std::string& prefix, const SpfeConfig& cfg,
                            int in_channels, const WeightStore& store) {
  cfg.validate();
  const int K = cfg.dims == 2 ? 9 : 27;
  SpfeWeights w;
  int cin = in_channels;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    SparseConvWeights cw;
    cw.kernel = fetch(store, prefix + ".b" + std::to_string(i) + ".k",
                      {K, cin, cfg.blocks[i].channels});
    cw.bias = fetch(store, prefix + ".b" + std::to_string(i) + ".b",
                    {cfg.blocks[i].channels});
    w.blocks.push_back(std::move(cw));
    cin = cfg.blocks[i].channels;
  }
  return w;
}

SparseTensor run_spfe(const SparseTensor& input, const SpfeConfig& cfg,
                      const SpfeWeights& weights,
                      std::vector<SpfeBlockStats>* stats) {
  cfg.validate();
  check(weights.blocks.size() == cfg.blocks.size(),
        "spfe: weight/config block count mismatch");
  check(input.dims == cfg.dims, "spfe: dims mismatch");
  if (stats) stats->clear();
  SparseTensor x = input;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    const Rulebook rb = b.kind == SpfeKind::SSC
                            ? build_rulebook_ssc(x)
                            : build_rulebook_sc(x, b.stride);
    if (stats)
      stats->push_back({x.size(), rb.out_coords.size(), rb.total_pairs()});
    x = sparse_conv_forward(x, weights.blocks[i], rb);
    for (auto& v : x.features) v = v > 0.0 ? v : 0.0;
  }
  return x;
}

}  // namespace rsn
