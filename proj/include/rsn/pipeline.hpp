#pragma once

// End-to-end plumbing: synthetic scenes, the full detection pipeline with
// stage statistics, the gamma-sweep benchmark, model weight bundles, and
// the JSON/JSONL file formats shared with the CLI.

#include <functional>
#include <map>

#include "rsn/evalkit.hpp"
#include "rsn/head.hpp"
#include "rsn/range_image.hpp"
#include "rsn/rife.hpp"
#include "rsn/voxelizer.hpp"

namespace rsn {

// One captured frame in its own sensor coordinates.
struct Scene {
  std::vector<LidarPoint> points;
  std::vector<Box7> boxes;
  RigidTransform ego_pose;  // sensor -> world
  double timestamp = 0.0;
};

struct SynthConfig {
  int num_boxes = 4;
  int num_ground_points = 600;
  int points_per_face = 30;
  double min_range = 10.0;   // box center distance from the sensor
  double max_range = 55.0;
  double min_separation = 8.0;
  double ground_z = -2.0;
  double face_inset = 0.995;  // pull surface samples inside the faces
  std::array<double, 2> box_l{3.6, 5.0};
  std::array<double, 2> box_w{1.6, 2.2};
  std::array<double, 2> box_h{1.4, 1.9};
};

/// Ground-plane clutter plus boxes resting on the plane, surface points on
/// the sensor-visible faces and the top face. Clutter never lands inside a
/// box; box centers keep min_separation apart.
Scene synth_scene(const SynthConfig& cfg, Rng& rng);

/// Frame sequence in capture order (timestamps strictly increasing, 0.1 s
/// apart) with the sensor moving through a fixed world; every frame is
/// expressed in its own sensor coordinates with the matching ego pose.
std::vector<Scene> synth_sequence(const SynthConfig& cfg, int num_frames,
                                  Rng& rng);

// A frame ready for the pipeline: rasterized image plus metadata.
struct FrameInput {
  RangeImage image;
  std::vector<Box7> boxes;  // may be empty for unlabeled frames
  RigidTransform pose;
  double timestamp = 0.0;
};

FrameInput project_scene(const Scene& scene, int rows, int cols);

/// Writes "<stem>.rsnr" plus a "<stem>.json" sidecar holding azimuth span,
/// timestamp, ego pose and ground-truth boxes.
void save_scene(const std::string& stem, const Scene& scene, int rows,
                int cols);
FrameInput load_scene(const std::string& stem);

// ---------------------------------------------------------------------------
// Run configuration and the model weight bundle.

// Planted-activation modes used for plumbing verification: kSeg replaces
// segmentation logits with label-derived values; kHead additionally
// replaces head outputs with encoded ground truth at per-box peak sites.
enum class OracleMode { kNone, kSeg, kHead };

struct RunConfig {
  DetectorConfig det = DetectorConfig::vehicle();
  UNetConfig unet;
  SpfeConfig spfe = SpfeConfig::preset("CarS");
  int rows = 32, cols = 256;
  int frames = 1;  // k + 1; > 1 enables the temporal path (delta channel)
  bool use_pointnet = true;
  int pointnet_channels = 64;
  OracleMode oracle = OracleMode::kNone;

  bool temporal() const { return frames > 1; }
  void validate() const;
};

struct ModelWeights {
  UNetWeights unet;
  PointNetWeights pointnet;  // present iff use_pointnet
  SpfeWeights spfe;
  HeadWeights head;
};

ModelWeights init_model(const RunConfig& cfg, Rng& rng);
WeightStore model_to_store(const RunConfig& cfg, const ModelWeights& w);
ModelWeights model_from_store(const RunConfig& cfg, const WeightStore& store);

// ---------------------------------------------------------------------------
// The pipeline proper.

struct StageStat {
  std::string name;
  double wall_ms = 0.0;
  std::int64_t count = 0;
};

struct PipelineResult {
  std::vector<Detection> detections;
  std::vector<StageStat> stages;

  std::int64_t stage_count(const std::string& name) const;
};

/// Frames ordered latest first; detections come out in the latest frame's
/// coordinates. Stage failures are rethrown with the stage label attached.
PipelineResult run_pipeline(const std::vector<FrameInput>& frames,
                            const RunConfig& cfg, const ModelWeights& w);
PipelineResult run_pipeline(const std::vector<Scene>& scenes,
                            const RunConfig& cfg, const ModelWeights& w);

// ---------------------------------------------------------------------------
// Gamma sweep benchmark.

struct BenchRow {
  double gamma = 0.0;
  std::int64_t selected_points = 0;
  std::int64_t spfe_pairs = 0;
  double wall_ms = 0.0;
  double recall = 0.0;  // selection recall against foreground labels
};

/// One row per gamma (sorted ascending) aggregated over the scenes.
/// Asserts that selected points and rulebook pairs never increase with
/// gamma. Scenes are processed by the worker pool; aggregation order is
/// fixed, so rows are deterministic.
std::vector<BenchRow> bench_gamma_sweep(const std::vector<FrameInput>& scenes,
                                        const RunConfig& cfg,
                                        const ModelWeights& w,
                                        std::vector<double> gammas);

std::string bench_rows_to_csv(const std::vector<BenchRow>& rows);

// ---------------------------------------------------------------------------
// Worker pool. RSN_THREADS caps the pool size (default: hardware threads).

int worker_count();

/// Runs fn(i) for i in [0, n) across the pool. Work is handed out by
/// index, so any per-index output slots make results order-independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Detection and box files: one JSON object per line with keys cx, cy, cz,
// l, w, h, theta, score, class_id and an optional frame index.

void write_detections_jsonl(const std::string& path,
                            const std::map<int, std::vector<Detection>>& by_frame,
                            bool with_frame_key = true);
std::string detections_to_jsonl(const std::map<int, std::vector<Detection>>& by_frame,
                                bool with_frame_key = true);
std::map<int, std::vector<Detection>> read_detections_jsonl(const std::string& path);

/// Ground-truth variant: score defaults to 0 and may be omitted in files.
void write_boxes_jsonl(const std::string& path,
                       const std::map<int, std::vector<Detection>>& by_frame);

}  // namespace rsn
