#include "rsn/weights_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace rsn {

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)) {
  std::size_t n = 1;
  for (int d : shape) {
    check(d > 0, "tensor: non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  data.assign(n, fill);
}

Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  check(fan_in > 0, "init: fan_in must be positive");
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_weights(const std::string& path, const WeightStore& store) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save_weights: cannot open " + path);
  f.write("RSNW", 4);
  put_u32(f, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(f, static_cast<std::uint32_t>(d));
    for (double x : t.data) {
      float g = static_cast<float>(x);
      std::uint32_t u;
      std::memcpy(&u, &g, 4);
      put_u32(f, u);
    }
  }
  check(f.good(), "save_weights: write failed for " + path);
}

WeightStore load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_weights: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  check(f.good() && std::memcmp(magic, "RSNW", 4) == 0,
        "load_weights: bad magic in " + path);
  const std::uint32_t count = get_u32(f);
  check(count < (1u << 20), "load_weights: implausible tensor count");
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(f);
    check(f.good() && name_len > 0 && name_len < 4096,
          "load_weights: bad tensor name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(f);
    check(f.good() && rank > 0 && rank <= 8, "load_weights: bad tensor rank");
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(get_u32(f));
      check(d > 0, "load_weights: non-positive dimension");
      n *= static_cast<std::size_t>(d);
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t u = get_u32(f);
      float g;
      std::memcpy(&g, &u, 4);
      t.data[k] = g;
    }
    check(f.good(), "load_weights: truncated file " + path);
    check(store.emplace(std::move(name), std::move(t)).second,
          "load_weights: duplicate tensor name");
  }
  return store;
}

const Tensor& fetch(const WeightStore& store, const std::string& name,
                    const std::vector<int>& shape) {
  const auto it = store.find(name);
  check(it != store.end(), "weights: missing tensor " + name);
  check(it->second.shape == shape, "weights: shape mismatch for " + name);
  return it->second;
}

}  // namespace rsn
