#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oracles.hpp"
#include "rsn/sparse_engine.hpp"

using namespace rsn;

namespace {

SparseTensor random_sparse(int dims, int channels, int count, int span, Rng& rng) {
  std::map<Coord, bool> used;
  std::vector<Coord> coords;
  while (static_cast<int>(coords.size()) < count) {
    Coord c{rng.uniform_int(0, span - 1), rng.uniform_int(0, span - 1),
            dims == 3 ? rng.uniform_int(0, span - 1) : 0};
    if (used[c]) continue;
    used[c] = true;
    coords.push_back(c);
  }
  std::vector<double> feats;
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (int c = 0; c < channels; ++c) feats.push_back(rng.uniform(-1.0, 1.0));
  return make_sparse_tensor(dims, std::move(coords), std::move(feats), channels);
}

SparseConvWeights random_weights(int dims, int cin, int cout, int extent, Rng& rng) {
  SparseConvWeights w;
  const int volume = dims == 3 ? extent * extent * extent : extent * extent;
  w.kernel = init_uniform({volume, cin, cout}, volume * cin, rng);
  w.bias = init_uniform({cout}, cin, rng);
  return w;
}

}  // namespace

TEST_CASE("make_sparse_tensor sorts and rejects duplicates") {
  std::vector<Coord> coords = {{2, 0, 0}, {0, 1, 0}, {0, 0, 0}};
  std::vector<double> feats = {2.0, 1.0, 0.0};
  const SparseTensor t = make_sparse_tensor(2, coords, feats, 1);
  REQUIRE(t.size() == 3);
  CHECK(t.coords[0] == Coord{0, 0, 0});
  CHECK(t.coords[1] == Coord{0, 1, 0});
  CHECK(t.coords[2] == Coord{2, 0, 0});
  // Features follow their coordinates through the sort.
  CHECK(t.features[0] == 0.0);
  CHECK(t.features[1] == 1.0);
  CHECK(t.features[2] == 2.0);

  CHECK_THROWS(make_sparse_tensor(2, {{1, 1, 0}, {1, 1, 0}}, {0.0, 0.0}, 1));
  CHECK_THROWS(make_sparse_tensor(2, {{1, 1, 5}}, {0.0}, 1));  // 2D needs z == 0
  CHECK_THROWS(make_sparse_tensor(2, {{1, 1, 0}}, {0.0, 0.0}, 1));  // size mismatch
}

TEST_CASE("submanifold rulebook on two adjacent sites") {
  const SparseTensor t =
      make_sparse_tensor(2, {{0, 0, 0}, {0, 1, 0}}, {1.0, 2.0}, 1);
  const Rulebook rb = build_rulebook_ssc(t);
  CHECK(rb.out_coords == t.coords);
  // Each site pairs with itself and with its neighbor: four pairs total.
  CHECK(rb.total_pairs() == 4);

  // The center offset carries the self pairs.
  const std::size_t center = rb.offset_count() / 2;
  REQUIRE(rb.pairs.size() == 9);
  CHECK(rb.pairs[center].size() == 2);
}

TEST_CASE("standard conv stride one dilates by the kernel footprint") {
  const SparseTensor t = make_sparse_tensor(2, {{5, 5, 0}}, {1.0}, 1);
  const Rulebook rb = build_rulebook_sc(t, 1);
  CHECK(rb.out_coords.size() == 9);
  CHECK(rb.total_pairs() == 9);
  const auto expect = testutil::sc_active_reference(t.coords, 2, 1, 3);
  CHECK(rb.out_coords == expect);

  const SparseTensor pair =
      make_sparse_tensor(2, {{5, 5, 0}, {5, 6, 0}}, {1.0, 2.0}, 1);
  const Rulebook rb2 = build_rulebook_sc(pair, 1);
  CHECK(rb2.out_coords.size() == 12);
  CHECK(rb2.total_pairs() == 18);
  CHECK(rb2.out_coords == testutil::sc_active_reference(pair.coords, 2, 1, 3));
}

TEST_CASE("standard conv stride two follows exact division") {
  // A site with odd coordinates reaches four downsampled outputs; a site
  // at the origin reaches only its own cell.
  const SparseTensor odd = make_sparse_tensor(2, {{1, 1, 0}}, {1.0}, 1);
  const Rulebook rb = build_rulebook_sc(odd, 2);
  CHECK(rb.out_coords.size() == 4);
  CHECK(rb.total_pairs() == 4);
  CHECK(rb.out_coords == testutil::sc_active_reference(odd.coords, 2, 2, 3));

  const SparseTensor origin = make_sparse_tensor(2, {{0, 0, 0}}, {1.0}, 1);
  const Rulebook rb0 = build_rulebook_sc(origin, 2);
  CHECK(rb0.out_coords.size() == 1);
  CHECK(rb0.out_coords[0] == Coord{0, 0, 0});
  CHECK(rb0.total_pairs() == 1);

  // Output stride level doubles through the conv.
  Rng rng(1);
  const SparseConvWeights w = random_weights(2, 1, 2, 3, rng);
  const SparseTensor out = sparse_conv_forward(origin, w, rb0);
  CHECK(out.stride_level == 2);
}

TEST_CASE("sparse convolutions match the dense reference") {
  Rng rng(61);
  for (int trial = 0; trial < 12; ++trial) {
    const int dims = trial % 2 == 0 ? 2 : 3;
    const int cin = rng.uniform_int(1, 3);
    const int cout = rng.uniform_int(1, 4);
    const int count = rng.uniform_int(1, 12);
    const SparseTensor in = random_sparse(dims, cin, count, 6, rng);
    const SparseConvWeights w = random_weights(dims, cin, cout, 3, rng);
    const auto ref = testutil::densify(in);

    for (int mode = 0; mode < 3; ++mode) {
      const Rulebook rb = mode == 0 ? build_rulebook_ssc(in)
                                    : build_rulebook_sc(in, mode);  // stride 1, 2
      const SparseTensor out = sparse_conv_forward(in, w, rb);
      REQUIRE(out.coords == rb.out_coords);
      REQUIRE(out.channels == cout);
      const int stride = mode == 2 ? 2 : 1;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto want =
            testutil::sparse_conv_reference_at(ref, w, out.coords[i], stride, 3);
        for (int c = 0; c < cout; ++c)
          CHECK(std::fabs(out.feat(i)[c] - want[static_cast<std::size_t>(c)]) < 1e-12);
      }
    }
  }
}

TEST_CASE("sparse conv handles empty inputs") {
  const SparseTensor empty = make_sparse_tensor(2, {}, {}, 3);
  const Rulebook rb = build_rulebook_ssc(empty);
  CHECK(rb.out_coords.empty());
  CHECK(rb.total_pairs() == 0);
  Rng rng(3);
  const SparseConvWeights w = random_weights(2, 3, 4, 3, rng);
  const SparseTensor out = sparse_conv_forward(empty, w, rb);
  CHECK(out.size() == 0);
  CHECK(out.channels == 4);
}

TEST_CASE("submanifold max pool") {
  // Two adjacent sites and one isolated site, two channels.
  const SparseTensor t = make_sparse_tensor(
      2, {{0, 0, 0}, {0, 1, 0}, {5, 5, 0}}, {1.0, -2.0, 5.0, 0.5, 2.0, 3.0}, 2);
  const SparseTensor out = sparse_max_pool(t, 3);
  REQUIRE(out.coords == t.coords);
  // Channels pool independently across the window.
  CHECK(out.feat(0)[0] == 5.0);
  CHECK(out.feat(0)[1] == 0.5);
  CHECK(out.feat(1)[0] == 5.0);
  CHECK(out.feat(1)[1] == 0.5);
  // Isolated site keeps its own values.
  CHECK(out.feat(2)[0] == 2.0);
  CHECK(out.feat(2)[1] == 3.0);
}

TEST_CASE("spfe presets and config serialization") {
  const SpfeConfig car_s = SpfeConfig::preset("CarS");
  CHECK(car_s.dims == 2);
  REQUIRE(car_s.blocks.size() == 7);
  CHECK(car_s.blocks[0].kind == SpfeKind::SSC);
  CHECK(car_s.blocks[4].kind == SpfeKind::SC);
  CHECK(car_s.blocks[4].stride == 2);
  for (const auto& b : car_s.blocks) CHECK(b.channels == 96);
  CHECK_NOTHROW(car_s.validate());

  const SpfeConfig car_l = SpfeConfig::preset("CarL");
  CHECK(car_l.blocks.size() > car_s.blocks.size());

  const SpfeConfig ped_s = SpfeConfig::preset("PedS");
  bool has_stride2 = false;
  for (const auto& b : ped_s.blocks) has_stride2 = has_stride2 || b.stride == 2;
  CHECK_FALSE(has_stride2);  // pedestrian keeps full resolution

  const SpfeConfig xl = SpfeConfig::preset("CarXL");
  CHECK(xl.dims == 3);
  for (const auto& b : xl.blocks) CHECK(b.channels == 64);

  CHECK_THROWS(SpfeConfig::preset("NoSuchPreset"));

  const std::string text = spfe_config_to_json(car_s);
  const SpfeConfig back = spfe_config_from_json(text);
  CHECK(back.dims == car_s.dims);
  REQUIRE(back.blocks.size() == car_s.blocks.size());
  for (std::size_t i = 0; i < back.blocks.size(); ++i) {
    CHECK(back.blocks[i].kind == car_s.blocks[i].kind);
    CHECK(back.blocks[i].stride == car_s.blocks[i].stride);
    CHECK(back.blocks[i].channels == car_s.blocks[i].channels);
  }

  CHECK_THROWS(spfe_config_from_json("{\"dims\": 2, \"blocks\": [{\"kind\": \"XX\"}]}"));

  SpfeConfig bad = car_s;
  bad.blocks[0].kind = SpfeKind::SSC;
  bad.blocks[0].stride = 2;  // SSC cannot stride
  CHECK_THROWS(bad.validate());
}

TEST_CASE("run_spfe applies relu and tracks strides") {
  Rng rng(71);
  const SpfeConfig cfg = SpfeConfig::preset("CarS");
  const SpfeWeights w = init_spfe(cfg, 5, rng);
  const SparseTensor in = random_sparse(2, 5, 30, 12, rng);

  std::vector<SpfeBlockStats> stats;
  const SparseTensor out = run_spfe(in, cfg, w, &stats);
  CHECK(out.stride_level == 2);  // one stride-2 block in the preset
  CHECK(out.channels == 96);
  for (double v : out.features) CHECK(v >= 0.0);

  REQUIRE(stats.size() == cfg.blocks.size());
  CHECK(stats[0].in_sites == in.size());
  for (std::size_t b = 0; b < stats.size(); ++b) {
    if (cfg.blocks[b].kind == SpfeKind::SSC)
      CHECK(stats[b].in_sites == stats[b].out_sites);
    if (b > 0) CHECK(stats[b].in_sites == stats[b - 1].out_sites);
    CHECK(stats[b].pairs >= stats[b].out_sites);  // every output has a pair
  }

  // Same run without stats gives the same tensor.
  const SparseTensor again = run_spfe(in, cfg, w, nullptr);
  REQUIRE(again.coords == out.coords);
  for (std::size_t i = 0; i < out.features.size(); ++i)
    CHECK(again.features[i] == out.features[i]);
}

TEST_CASE("spfe weights survive the store round trip") {
  Rng rng(73);
  SpfeConfig cfg;
  cfg.dims = 2;
  cfg.blocks = {{SpfeKind::SSC, 1, 8}, {SpfeKind::SC, 2, 12}};
  const SpfeWeights w = init_spfe(cfg, 4, rng);

  WeightStore store;
  spfe_to_store("spfe", w, store);
  const SpfeWeights back = spfe_from_store("spfe", cfg, 4, store);
  REQUIRE(back.blocks.size() == w.blocks.size());
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    CHECK(back.blocks[b].kernel.data == w.blocks[b].kernel.data);
    CHECK(back.blocks[b].bias.data == w.blocks[b].bias.data);
  }

  // Shape mismatches are config violations, not silent truncation.
  CHECK_THROWS(spfe_from_store("spfe", cfg, 5, store));
}

TEST_CASE("weight files quantize once") {
  Rng rng(79);
  WeightStore store;
  store["a.kernel"] = init_uniform({3, 4}, 3, rng);
  store["b.bias"] = init_uniform({4}, 4, rng);

  save_weights("test_w1.rsnw", store);
  const WeightStore once = load_weights("test_w1.rsnw");
  save_weights("test_w2.rsnw", once);
  const WeightStore twice = load_weights("test_w2.rsnw");

  // f32 storage: the first round trip quantizes, the second is exact.
  REQUIRE(once.size() == store.size());
  for (const auto& [name, t] : once) {
    CHECK(twice.at(name).data == t.data);
    for (std::size_t i = 0; i < t.data.size(); ++i)
      CHECK(t.data[i] ==
            static_cast<double>(static_cast<float>(store.at(name).data[i])));
  }
  std::remove("test_w1.rsnw");
  std::remove("test_w2.rsnw");

  CHECK_THROWS(load_weights("missing.rsnw"));
  CHECK_THROWS(fetch(store, "a.kernel", {4, 3}));
  CHECK_NOTHROW(fetch(store, "a.kernel", {3, 4}));
}
