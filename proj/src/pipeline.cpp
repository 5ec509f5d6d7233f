#include "rsn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace rsn {
namespace {

using ordered_json = nlohmann::ordered_json;

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

void timed_stage(std::vector<StageStat>& stages, const std::string& name,
                 const std::function<std::int64_t()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t count = 0;
  try {
    count = body();
  } catch (const std::exception& e) {
    fail("stage " + name + ": " + e.what());
  }
  stages.push_back(StageStat{name, elapsed_ms(t0), count});
}

// Sample a point on one box face (unit face coords in [-1, 1]^2), pulled
// toward the box center by the inset factor.
Point3 face_point(const Box7& b, int face, double u, double v, double inset) {
  double x = 0.0, y = 0.0, z = 0.0;
  const double hl = 0.5 * b.l * inset;
  const double hw = 0.5 * b.w * inset;
  const double hh = 0.5 * b.h * inset;
  switch (face) {
    case 0: x = +hl; y = u * hw; z = v * hh; break;
    case 1: x = -hl; y = u * hw; z = v * hh; break;
    case 2: y = +hw; x = u * hl; z = v * hh; break;
    case 3: y = -hw; x = u * hl; z = v * hh; break;
    default: z = +hh; x = u * hl; y = v * hw; break;  // top
  }
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  return Point3{b.cx + c * x - s * y, b.cy + s * x + c * y, b.cz + z};
}

// Outward normals of the four side faces, world frame.
std::array<double, 2> face_normal(const Box7& b, int face) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  switch (face) {
    case 0: return {c, s};
    case 1: return {-c, -s};
    case 2: return {-s, c};
    default: return {s, -c};
  }
}

std::array<double, 2> face_center(const Box7& b, int face) {
  const auto n = face_normal(b, face);
  const double half = (face < 2) ? 0.5 * b.l : 0.5 * b.w;
  return {b.cx + half * n[0], b.cy + half * n[1]};
}

bool inside_any_box_inflated(const Point3& p, const std::vector<Box7>& boxes,
                             double margin) {
  for (const Box7& b : boxes) {
    Box7 big = b;
    big.l += 2.0 * margin;
    big.w += 2.0 * margin;
    if (point_in_box_bev(p.x, p.y, big)) return true;
  }
  return false;
}

void plant_head_from_boxes(HeadOutput& head,
                           const std::vector<std::array<double, 3>>& centers,
                           const std::vector<Box7>& boxes, bool pillar) {
  const int nb = head.num_bins;
  std::fill(head.heatmap_logits.begin(), head.heatmap_logits.end(), -10.0);
  std::fill(head.bin_logits.begin(), head.bin_logits.end(), -10.0);
  std::fill(head.bin_residuals.begin(), head.bin_residuals.end(), 0.0);
  for (auto& p : head.box_params) p = {0.0, 0.0, 0.0, 1.0, 1.0, 1.0};

  for (const Box7& b : boxes) {
    int best = -1;
    double best_d = kInf;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const auto& v = centers[i];
      const bool inside = pillar ? point_in_box_bev(v[0], v[1], b)
                                 : point_in_box(Point3{v[0], v[1], v[2]}, b);
      if (!inside) continue;
      const double dx = v[0] - b.cx, dy = v[1] - b.cy;
      const double d = pillar ? std::sqrt(dx * dx + dy * dy)
                              : std::sqrt(dx * dx + dy * dy +
                                          (v[2] - b.cz) * (v[2] - b.cz));
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) continue;  // box covers no site; nothing to plant
    const std::size_t i = static_cast<std::size_t>(best);
    head.heatmap_logits[i] = 10.0;
    head.box_params[i][0] = b.cx - centers[i][0];
    head.box_params[i][1] = b.cy - centers[i][1];
    head.box_params[i][2] = pillar ? b.cz : b.cz - centers[i][2];
    head.box_params[i][3] = b.l;
    head.box_params[i][4] = b.w;
    head.box_params[i][5] = b.h;
    const auto [bin, residual] = heading_to_bin(b.theta, nb);
    head.bin_logits[i * nb + bin] = 10.0;
    head.bin_residuals[i * nb + bin] = residual;
  }
}

}  // namespace

Scene synth_scene(const SynthConfig& cfg, Rng& rng) {
  check(cfg.num_boxes >= 0 && cfg.num_ground_points >= 0,
        "synth: negative counts");
  check(cfg.min_range > 0.0 && cfg.max_range > cfg.min_range,
        "synth: bad range interval");
  Scene s;

  for (int bi = 0; bi < cfg.num_boxes; ++bi) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double r = rng.uniform(cfg.min_range, cfg.max_range);
      const double az = rng.uniform(-kPi, kPi);
      const double l = rng.uniform(cfg.box_l[0], cfg.box_l[1]);
      const double w = rng.uniform(cfg.box_w[0], cfg.box_w[1]);
      const double h = rng.uniform(cfg.box_h[0], cfg.box_h[1]);
      const double theta = rng.uniform(-kPi, kPi);
      const Box7 b = make_box(r * std::cos(az), r * std::sin(az),
                              cfg.ground_z + 0.5 * h, l, w, h, theta);
      bool clear = true;
      for (const Box7& other : s.boxes) {
        const double dx = b.cx - other.cx, dy = b.cy - other.cy;
        if (std::sqrt(dx * dx + dy * dy) < cfg.min_separation) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      s.boxes.push_back(b);
      placed = true;
    }
    check(placed, "synth: could not place boxes with the given separation");
  }

  for (const Box7& b : s.boxes) {
    for (int face = 0; face < 5; ++face) {
      if (face < 4) {
        const auto n = face_normal(b, face);
        const auto c = face_center(b, face);
        if (c[0] * n[0] + c[1] * n[1] >= 0.0) continue;  // back face
      }
      for (int k = 0; k < cfg.points_per_face; ++k) {
        const double u = rng.uniform(-1.0, 1.0);
        const double v = rng.uniform(-1.0, 1.0);
        LidarPoint p;
        p.position = face_point(b, face, u, v, cfg.face_inset);
        p.intensity = rng.uniform(0.1, 1.0);
        p.elongation = rng.uniform(0.0, 0.3);
        s.points.push_back(p);
      }
    }
  }

  int made = 0;
  int attempts = 0;
  while (made < cfg.num_ground_points && attempts < cfg.num_ground_points * 50) {
    ++attempts;
    const double az = rng.uniform(-kPi, kPi);
    const double radius = rng.uniform(3.0, 70.0);
    const Point3 g{radius * std::cos(az), radius * std::sin(az), cfg.ground_z};
    if (inside_any_box_inflated(g, s.boxes, 0.3)) continue;
    LidarPoint p;
    p.position = g;
    p.intensity = rng.uniform(0.1, 1.0);
    p.elongation = rng.uniform(0.0, 0.3);
    s.points.push_back(p);
    ++made;
  }
  return s;
}

std::vector<Scene> synth_sequence(const SynthConfig& cfg, int num_frames,
                                  Rng& rng) {
  check(num_frames >= 1, "synth: need at least one frame");
  // A fixed world: boxes and clutter sampled once, observed from a moving
  // sensor. Surface points are re-sampled per frame from that frame's view.
  const Scene world = synth_scene(cfg, rng);

  std::vector<Scene> frames;
  for (int i = 0; i < num_frames; ++i) {
    const RigidTransform pose{0.03 * i, 0.6 * i, -0.3 * i, 0.0};
    const RigidTransform to_sensor = pose.inverse();
    Scene f;
    f.ego_pose = pose;
    f.timestamp = 0.1 * i;
    for (const Box7& b : world.boxes) f.boxes.push_back(to_sensor.apply(b));
    // Clutter: shared world points seen from this pose.
    for (const LidarPoint& p : world.points) {
      if (p.position.z != cfg.ground_z) continue;
      LidarPoint q = p;
      q.position = to_sensor.apply(p.position);
      f.points.push_back(q);
    }
    for (const Box7& b : f.boxes) {
      for (int face = 0; face < 5; ++face) {
        if (face < 4) {
          const auto n = face_normal(b, face);
          const auto c = face_center(b, face);
          if (c[0] * n[0] + c[1] * n[1] >= 0.0) continue;
        }
        for (int k = 0; k < cfg.points_per_face; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          const double v = rng.uniform(-1.0, 1.0);
          LidarPoint p;
          p.position = face_point(b, face, u, v, cfg.face_inset);
          p.intensity = rng.uniform(0.1, 1.0);
          p.elongation = rng.uniform(0.0, 0.3);
          f.points.push_back(p);
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

FrameInput project_scene(const Scene& scene, int rows, int cols) {
  FrameInput f;
  f.image = project(scene.points, rows, cols, uniform_inclinations(rows));
  f.boxes = scene.boxes;
  f.pose = scene.ego_pose;
  f.timestamp = scene.timestamp;
  return f;
}

void save_scene(const std::string& stem, const Scene& scene, int rows,
                int cols) {
  const FrameInput f = project_scene(scene, rows, cols);
  save_range_image(stem + ".rsnr", f.image);

  ordered_json j;
  j["azimuth_span"] = f.image.azimuth_span;
  j["timestamp"] = scene.timestamp;
  j["ego_pose"] = {{"yaw", scene.ego_pose.yaw},
                   {"tx", scene.ego_pose.tx},
                   {"ty", scene.ego_pose.ty},
                   {"tz", scene.ego_pose.tz}};
  ordered_json boxes = ordered_json::array();
  for (const Box7& b : scene.boxes)
    boxes.push_back({{"cx", b.cx}, {"cy", b.cy}, {"cz", b.cz}, {"l", b.l},
                     {"w", b.w}, {"h", b.h}, {"theta", b.theta}});
  j["boxes"] = boxes;

  std::ofstream out(stem + ".json", std::ios::binary);
  check(out.good(), "save_scene: cannot open " + stem + ".json");
  out << j.dump(2) << "\n";
  check(out.good(), "save_scene: write failed");
}

FrameInput load_scene(const std::string& stem) {
  FrameInput f;
  f.image = load_range_image(stem + ".rsnr");

  std::ifstream in(stem + ".json", std::ios::binary);
  check(in.good(), "load_scene: cannot open " + stem + ".json");
  nlohmann::json j;
  in >> j;
  f.timestamp = j.at("timestamp").get<double>();
  const auto& pose = j.at("ego_pose");
  f.pose = RigidTransform{pose.at("yaw").get<double>(), pose.at("tx").get<double>(),
                          pose.at("ty").get<double>(), pose.at("tz").get<double>()};
  for (const auto& b : j.at("boxes"))
    f.boxes.push_back(make_box(b.at("cx").get<double>(), b.at("cy").get<double>(),
                               b.at("cz").get<double>(), b.at("l").get<double>(),
                               b.at("w").get<double>(), b.at("h").get<double>(),
                               b.at("theta").get<double>()));
  return f;
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  det.validate();
  unet.validate();
  spfe.validate();
  check(spfe.dims == (det.pillar() ? 2 : 3),
        "config: backbone dims must match voxel mode");
  check(rows > 0 && cols > 0, "config: bad image size");
  check(frames >= 1, "config: frames must be at least 1");
  if (use_pointnet)
    check(pointnet_channels > 0, "config: bad embedding width");
}

ModelWeights init_model(const RunConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelWeights w;
  w.unet = init_unet(cfg.unet, rng);
  const int aug = augmented_width(cfg.unet.feature_channels, cfg.temporal());
  int spfe_in = aug;
  if (cfg.use_pointnet) {
    w.pointnet = init_pointnet(aug, cfg.pointnet_channels, rng);
    spfe_in = cfg.pointnet_channels;
  }
  w.spfe = init_spfe(cfg.spfe, spfe_in, rng);
  const int head_in =
      cfg.spfe.blocks.empty() ? spfe_in : cfg.spfe.blocks.back().channels;
  w.head = init_head(head_in, cfg.det.num_heading_bins, rng);
  return w;
}

WeightStore model_to_store(const RunConfig& cfg, const ModelWeights& w) {
  WeightStore store;
  unet_to_store("unet", w.unet, store);
  if (cfg.use_pointnet) pointnet_to_store("pointnet", w.pointnet, store);
  spfe_to_store("spfe", w.spfe, store);
  head_to_store("head", w.head, store);
  return store;
}

ModelWeights model_from_store(const RunConfig& cfg, const WeightStore& store) {
  cfg.validate();
  ModelWeights w;
  w.unet = unet_from_store("unet", cfg.unet, store);
  const int aug = augmented_width(cfg.unet.feature_channels, cfg.temporal());
  int spfe_in = aug;
  if (cfg.use_pointnet) {
    w.pointnet = pointnet_from_store("pointnet", aug, cfg.pointnet_channels, store);
    spfe_in = cfg.pointnet_channels;
  }
  w.spfe = spfe_from_store("spfe", cfg.spfe, spfe_in, store);
  const int head_in =
      cfg.spfe.blocks.empty() ? spfe_in : cfg.spfe.blocks.back().channels;
  w.head = head_from_store("head", head_in, cfg.det.num_heading_bins, store);
  return w;
}

// ---------------------------------------------------------------------------

std::int64_t PipelineResult::stage_count(const std::string& name) const {
  for (const StageStat& s : stages)
    if (s.name == name) return s.count;
  fail("no stage named " + name);
}

PipelineResult run_pipeline(const std::vector<FrameInput>& frames,
                            const RunConfig& cfg, const ModelWeights& w) {
  cfg.validate();
  check(static_cast<int>(frames.size()) == cfg.frames,
        "pipeline: frame count does not match the configuration");

  PipelineResult result;
  auto& stages = result.stages;

  std::vector<RifeOutput> rife(frames.size());
  timed_stage(stages, "rife", [&]() -> std::int64_t {
    std::int64_t pixels = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const DenseTensor t = normalize(frames[i].image, cfg.det.norm_caps);
      rife[i] = unet_forward(t, cfg.unet, w.unet);
      if (cfg.oracle != OracleMode::kNone) {
        const auto labels = label_foreground(frames[i].image, frames[i].boxes);
        for (std::size_t px = 0; px < labels.size(); ++px)
          rife[i].seg_logits[px] = labels[px] ? 10.0 : -10.0;
      }
      pixels += static_cast<std::int64_t>(frames[i].image.range.size());
    }
    return pixels;
  });

  std::vector<std::vector<ForegroundPoint>> selected(frames.size());
  timed_stage(stages, "select", [&]() -> std::int64_t {
    std::int64_t total = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      selected[i] = select_foreground(rife[i], frames[i].image, cfg.det.gamma);
      total += static_cast<std::int64_t>(selected[i].size());
    }
    return total;
  });

  MergedPoints merged;
  timed_stage(stages, "merge", [&]() -> std::int64_t {
    std::vector<TemporalFrame> tf(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      tf[i].points = std::move(selected[i]);
      tf[i].pose = frames[i].pose;
      tf[i].timestamp = frames[i].timestamp;
    }
    merged = temporal_merge(tf);
    return static_cast<std::int64_t>(merged.points.size());
  });

  const VoxelGrid grid = VoxelGrid::from_config(cfg.det);
  VoxelMap vmap;
  timed_stage(stages, "voxelize", [&]() -> std::int64_t {
    std::vector<Point3> positions;
    positions.reserve(merged.points.size());
    for (const ForegroundPoint& p : merged.points) positions.push_back(p.position);
    vmap = voxelize_dynamic(positions, grid);
    return static_cast<std::int64_t>(vmap.size());
  });

  SparseTensor spfe_in;
  timed_stage(stages, "pointnet", [&]() -> std::int64_t {
    const auto deltas = cfg.temporal()
                            ? std::optional<std::vector<double>>(merged.deltas)
                            : std::nullopt;
    const auto aug = augment_points(merged.points, vmap, grid, deltas);
    const auto vox = voxel_pointnet(aug, cfg.use_pointnet ? &w.pointnet : nullptr);
    const int channels =
        cfg.use_pointnet ? cfg.pointnet_channels
                         : augmented_width(cfg.unet.feature_channels, cfg.temporal());
    std::vector<Coord> coords;
    std::vector<double> feats;
    coords.reserve(vox.size());
    feats.reserve(vox.size() * static_cast<std::size_t>(channels));
    for (const VoxelFeature& v : vox) {
      coords.push_back(v.coord);
      feats.insert(feats.end(), v.feature.begin(), v.feature.end());
    }
    spfe_in = make_sparse_tensor(grid.dims(), std::move(coords), std::move(feats),
                                 channels, 1);
    return static_cast<std::int64_t>(spfe_in.size());
  });

  SparseTensor feat;
  timed_stage(stages, "spfe", [&]() -> std::int64_t {
    std::vector<SpfeBlockStats> bstats;
    feat = run_spfe(spfe_in, cfg.spfe, w.spfe, &bstats);
    std::int64_t pairs = 0;
    for (const SpfeBlockStats& b : bstats)
      pairs += static_cast<std::int64_t>(b.pairs);
    return pairs;
  });

  HeadOutput head;
  std::vector<std::array<double, 3>> centers(feat.size());
  timed_stage(stages, "head", [&]() -> std::int64_t {
    head = head_forward(feat, w.head, cfg.det.num_heading_bins);
    for (std::size_t i = 0; i < feat.size(); ++i)
      centers[i] = grid.center_of(feat.coords[i], feat.stride_level);
    if (cfg.oracle == OracleMode::kHead)
      plant_head_from_boxes(head, centers, frames[0].boxes, grid.pillar());
    return static_cast<std::int64_t>(feat.size());
  });

  timed_stage(stages, "decode", [&]() -> std::int64_t {
    result.detections = decode(head, feat.coords, centers, grid.dims(),
                               grid.pillar(), cfg.det.delta2, cfg.det.class_id);
    return static_cast<std::int64_t>(result.detections.size());
  });

  return result;
}

PipelineResult run_pipeline(const std::vector<Scene>& scenes,
                            const RunConfig& cfg, const ModelWeights& w) {
  std::vector<FrameInput> frames;
  std::vector<StageStat> project_stage;
  timed_stage(project_stage, "project", [&]() -> std::int64_t {
    std::int64_t valid = 0;
    for (const Scene& s : scenes) {
      frames.push_back(project_scene(s, cfg.rows, cfg.cols));
      for (std::uint8_t v : frames.back().image.valid) valid += v;
    }
    return valid;
  });

  PipelineResult result = run_pipeline(frames, cfg, w);
  result.stages.insert(result.stages.begin(), project_stage[0]);
  return result;
}

// ---------------------------------------------------------------------------

int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int n = static_cast<int>(hw);
  if (const char* env = std::getenv("RSN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
    else n = 1;
  }
  return std::max(1, n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------

std::vector<BenchRow> bench_gamma_sweep(const std::vector<FrameInput>& scenes,
                                        const RunConfig& cfg,
                                        const ModelWeights& w,
                                        std::vector<double> gammas) {
  check(gammas.size() >= 2, "bench: need at least two gamma values");
  check(!scenes.empty(), "bench: need at least one scene");
  check(cfg.frames == 1, "bench: scenes are swept one frame at a time");
  std::sort(gammas.begin(), gammas.end());

  struct SceneCell {
    std::int64_t selected = 0;
    std::int64_t pairs = 0;
    double wall_ms = 0.0;
    std::int64_t hit = 0;       // selected foreground pixels
    std::int64_t positives = 0; // labeled foreground pixels
  };
  std::vector<std::vector<SceneCell>> cells(
      scenes.size(), std::vector<SceneCell>(gammas.size()));

  const VoxelGrid grid = VoxelGrid::from_config(cfg.det);
  parallel_for(scenes.size(), [&](std::size_t si) {
    const FrameInput& frame = scenes[si];
    const auto labels = label_foreground(frame.image, frame.boxes);
    const DenseTensor t = normalize(frame.image, cfg.det.norm_caps);
    RifeOutput rife = unet_forward(t, cfg.unet, w.unet);
    if (cfg.oracle != OracleMode::kNone)
      for (std::size_t px = 0; px < labels.size(); ++px)
        rife.seg_logits[px] = labels[px] ? 10.0 : -10.0;

    std::int64_t positives = 0;
    for (std::uint8_t l : labels) positives += l;

    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
      SceneCell& cell = cells[si][gi];
      cell.positives = positives;
      const auto t0 = std::chrono::steady_clock::now();

      const auto pts = select_foreground(rife, frame.image, gammas[gi]);
      cell.selected = static_cast<std::int64_t>(pts.size());
      for (const ForegroundPoint& p : pts)
        cell.hit += labels[static_cast<std::size_t>(
            frame.image.index(p.row, p.col))];

      std::vector<Point3> positions;
      positions.reserve(pts.size());
      for (const ForegroundPoint& p : pts) positions.push_back(p.position);
      const VoxelMap vmap = voxelize_dynamic(positions, grid);
      const auto aug = augment_points(pts, vmap, grid);
      const auto vox =
          voxel_pointnet(aug, cfg.use_pointnet ? &w.pointnet : nullptr);
      const int channels =
          cfg.use_pointnet
              ? cfg.pointnet_channels
              : augmented_width(cfg.unet.feature_channels, false);
      std::vector<Coord> coords;
      std::vector<double> feats;
      for (const VoxelFeature& v : vox) {
        coords.push_back(v.coord);
        feats.insert(feats.end(), v.feature.begin(), v.feature.end());
      }
      SparseTensor sp = make_sparse_tensor(grid.dims(), std::move(coords),
                                           std::move(feats), channels, 1);
      std::vector<SpfeBlockStats> bstats;
      const SparseTensor feat = run_spfe(sp, cfg.spfe, w.spfe, &bstats);
      for (const SpfeBlockStats& b : bstats)
        cell.pairs += static_cast<std::int64_t>(b.pairs);

      std::vector<std::array<double, 3>> centers(feat.size());
      for (std::size_t i = 0; i < feat.size(); ++i)
        centers[i] = grid.center_of(feat.coords[i], feat.stride_level);
      const HeadOutput head =
          head_forward(feat, w.head, cfg.det.num_heading_bins);
      decode(head, feat.coords, centers, grid.dims(), grid.pillar(),
             cfg.det.delta2, cfg.det.class_id);

      cell.wall_ms = elapsed_ms(t0);
    }
  });

  std::vector<BenchRow> rows(gammas.size());
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    BenchRow& row = rows[gi];
    row.gamma = gammas[gi];
    std::int64_t hit = 0, positives = 0;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
      row.selected_points += cells[si][gi].selected;
      row.spfe_pairs += cells[si][gi].pairs;
      row.wall_ms += cells[si][gi].wall_ms;
      hit += cells[si][gi].hit;
      positives += cells[si][gi].positives;
    }
    row.recall = positives == 0 ? 1.0
                                : static_cast<double>(hit) /
                                      static_cast<double>(positives);
  }
  for (std::size_t gi = 1; gi < rows.size(); ++gi) {
    check(rows[gi].selected_points <= rows[gi - 1].selected_points,
          "bench: selected points increased with gamma");
    check(rows[gi].spfe_pairs <= rows[gi - 1].spfe_pairs,
          "bench: rulebook pairs increased with gamma");
  }
  return rows;
}

std::string bench_rows_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "gamma,selected_points,spfe_pairs,wall_ms,recall\n";
  for (const BenchRow& r : rows) {
    out << std::setprecision(12) << r.gamma << ',' << r.selected_points << ','
        << r.spfe_pairs << ',' << std::fixed << std::setprecision(3)
        << r.wall_ms << std::defaultfloat << std::setprecision(12) << ','
        << r.recall << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

ordered_json detection_json(const Detection& d, int frame, bool with_frame) {
  ordered_json j;
  j["cx"] = d.box.cx;
  j["cy"] = d.box.cy;
  j["cz"] = d.box.cz;
  j["l"] = d.box.l;
  j["w"] = d.box.w;
  j["h"] = d.box.h;
  j["theta"] = d.box.theta;
  j["score"] = d.score;
  j["class_id"] = d.class_id;
  if (with_frame) j["frame"] = frame;
  return j;
}

}  // namespace

std::string detections_to_jsonl(const std::map<int, std::vector<Detection>>& by_frame,
                                bool with_frame_key) {
  std::string out;
  for (const auto& [frame, dets] : by_frame)
    for (const Detection& d : dets)
      out += detection_json(d, frame, with_frame_key).dump() + "\n";
  return out;
}

void write_detections_jsonl(const std::string& path,
                            const std::map<int, std::vector<Detection>>& by_frame,
                            bool with_frame_key) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open " + path);
  out << detections_to_jsonl(by_frame, with_frame_key);
  check(out.good(), "write failed: " + path);
}

std::map<int, std::vector<Detection>> read_detections_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open " + path);
  std::map<int, std::vector<Detection>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Detection d;
    d.box = make_box(j.at("cx").get<double>(), j.at("cy").get<double>(),
                     j.at("cz").get<double>(), j.at("l").get<double>(),
                     j.at("w").get<double>(), j.at("h").get<double>(),
                     j.at("theta").get<double>());
    d.score = j.value("score", 0.0);
    d.class_id = j.value("class_id", 0);
    out[j.value("frame", 0)].push_back(d);
  }
  return out;
}

void write_boxes_jsonl(const std::string& path,
                       const std::map<int, std::vector<Detection>>& by_frame) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open " + path);
  for (const auto& [frame, dets] : by_frame) {
    for (const Detection& d : dets) {
      ordered_json j = detection_json(d, frame, true);
      j.erase("score");
      out << j.dump() << "\n";
    }
  }
  check(out.good(), "write failed: " + path);
}

}  // namespace rsn
