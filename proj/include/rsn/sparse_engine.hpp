#pragma once

// Sparse convolution engine: coordinate-sorted sparse tensors, rulebooks
// for submanifold (SSC) and standard (SC) convolutions, a submanifold max
// pool, and the configurable sparse backbone (SPFE).

#include "rsn/core.hpp"
#include "rsn/weights_io.hpp"

namespace rsn {

// Active sites in canonical (lexicographic, unique) coordinate order with a
// dense feature row per site. stride_level tracks cumulative downsampling.
struct SparseTensor {
  int dims = 2;  // 2 or 3; 2D coords keep coord[2] == 0
  int channels = 0;
  int stride_level = 1;
  std::vector<Coord> coords;
  std::vector<double> features;  // size() * channels, row-major

  std::size_t size() const { return coords.size(); }
  double* feat(std::size_t i) { return features.data() + i * channels; }
  const double* feat(std::size_t i) const { return features.data() + i * channels; }
  void validate() const;
};

/// Sorts sites into canonical order (features follow); duplicate
/// coordinates are an error.
SparseTensor make_sparse_tensor(int dims, std::vector<Coord> coords,
                                std::vector<double> features, int channels,
                                int stride_level = 1);

// Gather lists per kernel offset. A pair (i -> o) exists for offset k iff
// coord(i) == stride * coord(o) - k and both sites are active; at stride 1
// this is coord(o) - coord(i) == k. Offsets are enumerated lexicographically
// from (-r, ..) to (+r, ..); pairs are sorted by (out, in).
struct Rulebook {
  int dims = 2;
  int extent = 3;
  int stride = 1;
  std::vector<Coord> out_coords;  // lexicographic
  std::vector<std::vector<std::pair<int, int>>> pairs;  // per offset index

  std::size_t offset_count() const { return pairs.size(); }
  std::size_t total_pairs() const;
};

/// Submanifold rulebook: output sites equal input sites.
Rulebook build_rulebook_ssc(const SparseTensor& input, int extent = 3);

/// Standard conv rulebook. Stride 1 dilates the active set by the kernel
/// footprint; stride 2 follows strided arithmetic (an output site is active
/// iff an active input lies in its receptive field).
Rulebook build_rulebook_sc(const SparseTensor& input, int stride,
                           int extent = 3);

struct SparseConvWeights {
  Tensor kernel;  // (extent^dims, cin, cout), offset-major
  Tensor bias;    // (cout)
};

/// out(o) = bias + sum over offsets k of W[k] @ in(stride*o - k).
/// Accumulation order is fixed, so results are deterministic.
SparseTensor sparse_conv_forward(const SparseTensor& input,
                                 const SparseConvWeights& w,
                                 const Rulebook& rb);

/// Channelwise max over active sites in the centered window; inactive
/// neighbors are ignored, output sites equal input sites.
SparseTensor sparse_max_pool(const SparseTensor& input, int window = 3);

// ---------------------------------------------------------------------------
// SPFE: the sparse backbone as a block list.

enum class SpfeKind { SSC, SC };

struct SpfeBlock {
  SpfeKind kind = SpfeKind::SSC;
  int stride = 1;  // SSC must be 1; SC may be 1 or 2
  int channels = 96;
};

struct SpfeConfig {
  int dims = 2;
  std::vector<SpfeBlock> blocks;

  void validate() const;
  /// Named presets: CarS, CarL, PedS, PedL (2D, 96 channels) and CarXL
  /// (3D, 64 channels, no point embedding upstream).
  static SpfeConfig preset(const std::string& name);
};

std::string spfe_config_to_json(const SpfeConfig& cfg);
SpfeConfig spfe_config_from_json(const std::string& text);

struct SpfeWeights {
  std::vector<SparseConvWeights> blocks;
};

SpfeWeights init_spfe(const SpfeConfig& cfg, int in_channels, Rng& rng);
void spfe_to_store(const std::string& prefix, const SpfeWeights& w,
                   WeightStore& store);
SpfeWeights spfe_from_store(const std::string& prefix, const SpfeConfig& cfg,
                            int in_channels, const WeightStore& store);

struct SpfeBlockStats {
  std::size_t in_sites = 0;
  std::size_t out_sites = 0;
  std::size_t pairs = 0;
};

/// Applies the blocks in order (ReLU after each conv). SSC preserves the
/// site set; SC stride 2 doubles stride_level.
SparseTensor run_spfe(const SparseTensor& input, const SpfeConfig& cfg,
                      const SpfeWeights& weights,
                      std::vector<SpfeBlockStats>* stats = nullptr);

}  // namespace rsn
