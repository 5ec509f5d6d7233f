#pragma once

// Named-tensor checkpoint store and the RSNW on-disk format.

#include <map>

#include "rsn/core.hpp"

namespace rsn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> shape_, double fill = 0.0);

  std::size_t size() const { return data.size(); }
};

// Name -> tensor, serialized in name order so files are reproducible.
using WeightStore = std::map<std::string, Tensor>;

/// Fan-in scaled uniform init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng);

/// RSNW binary format (little-endian): magic "RSNW", u32 tensor count, then
/// per tensor: u32 name length, name bytes, u32 rank, u32 dims, f32 data.
void save_weights(const std::string& path, const WeightStore& store);
WeightStore load_weights(const std::string& path);

/// Lookup with shape check; throws a config violation on mismatch.
const Tensor& fetch(const WeightStore& store, const std::string& name,
                    const std::vector<int>& shape);

}  // namespace rsn
