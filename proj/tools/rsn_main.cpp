// Command line front end: scene synthesis, pipeline runs, the gamma sweep
// benchmark, evaluation, ensemble fusion, and weight initialization.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsn/pipeline.hpp"

namespace {

struct ConfigFlags {
  std::string cls = "vehicle";
  std::string preset = "CarS";
  int frames = 1;
  int rows = 32, cols = 512;
  double gamma = -1.0;  // negative: keep the class default
  double sigma = -1.0;
  double delta2 = -1.0;
  int bins = -1;
  int pointnet_channels = 64;
  std::string oracle = "none";
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--class", f.cls, "Detector class: vehicle or pedestrian")
      ->check(CLI::IsMember({"vehicle", "pedestrian"}));
  cmd->add_option("--preset", f.preset,
                  "Backbone preset: CarS, CarL, PedS, PedL, CarXL");
  cmd->add_option("--frames", f.frames, "Frames per run (k + 1)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--rows", f.rows, "Range image rows");
  cmd->add_option("--cols", f.cols, "Range image columns");
  cmd->add_option("--gamma", f.gamma, "Foreground score threshold");
  cmd->add_option("--sigma", f.sigma, "Heatmap sharpness");
  cmd->add_option("--delta2", f.delta2, "Decode candidate threshold");
  cmd->add_option("--bins", f.bins, "Heading bins");
  cmd->add_option("--pointnet-channels", f.pointnet_channels,
                  "Per-voxel embedding width");
  cmd->add_option("--oracle", f.oracle,
                  "Planted-activation mode: none, seg, head")
      ->check(CLI::IsMember({"none", "seg", "head"}));
}

rsn::RunConfig make_config(const ConfigFlags& f) {
  rsn::RunConfig cfg;
  cfg.det = f.cls == "pedestrian" ? rsn::DetectorConfig::pedestrian()
                                  : rsn::DetectorConfig::vehicle();
  cfg.spfe = rsn::SpfeConfig::preset(f.preset);
  if (cfg.spfe.dims == 3) {
    cfg.det.voxel_size = {0.2, 0.2, 0.2};
    cfg.use_pointnet = false;
  }
  cfg.frames = f.frames;
  cfg.rows = f.rows;
  cfg.cols = f.cols;
  cfg.pointnet_channels = f.pointnet_channels;
  if (f.gamma >= 0.0) cfg.det.gamma = f.gamma;
  if (f.sigma > 0.0) cfg.det.sigma = f.sigma;
  if (f.delta2 >= 0.0) cfg.det.delta2 = f.delta2;
  if (f.bins > 0) cfg.det.num_heading_bins = f.bins;
  if (f.oracle == "seg") cfg.oracle = rsn::OracleMode::kSeg;
  if (f.oracle == "head") cfg.oracle = rsn::OracleMode::kHead;
  return cfg;
}

rsn::ModelWeights load_or_init(const rsn::RunConfig& cfg,
                               const std::string& weights_path,
                               std::uint64_t seed) {
  if (!weights_path.empty())
    return rsn::model_from_store(cfg, rsn::load_weights(weights_path));
  rsn::Rng rng(seed);
  return rsn::init_model(cfg, rng);
}

std::string frame_stem(const std::string& dir, int scene, int frame,
                       int frames_per_scene) {
  std::ostringstream s;
  s << dir << "/scene_" << std::setw(3) << std::setfill('0') << scene;
  if (frames_per_scene > 1) s << "_f" << frame;
  return s.str();
}

int run_synth(const ConfigFlags& flags, std::uint64_t seed, int scenes,
              const std::string& out_dir, const rsn::SynthConfig& synth) {
  // Frame keys: one per independent scene, or one per capture frame when a
  // single temporal sequence is generated. Ground truth is stored in each
  // frame's own sensor coordinates, matching `run` output keys.
  rsn::check(flags.frames == 1 || scenes == 1,
             "synth: multi-frame mode generates a single sequence");
  std::filesystem::create_directories(out_dir);
  rsn::Rng rng(seed);
  const int class_id = make_config(flags).det.class_id;
  std::map<int, std::vector<rsn::Detection>> gt;
  for (int si = 0; si < scenes; ++si) {
    rsn::Rng scene_rng = rng.fork(static_cast<std::uint64_t>(si));
    std::vector<rsn::Scene> seq;
    if (flags.frames == 1)
      seq.push_back(rsn::synth_scene(synth, scene_rng));
    else
      seq = rsn::synth_sequence(synth, flags.frames, scene_rng);
    for (std::size_t fi = 0; fi < seq.size(); ++fi) {
      rsn::save_scene(frame_stem(out_dir, si, static_cast<int>(fi), flags.frames),
                      seq[fi], flags.rows, flags.cols);
      const int key = flags.frames == 1 ? si : static_cast<int>(fi);
      for (const rsn::Box7& b : seq[fi].boxes) {
        rsn::Detection d;
        d.box = b;
        d.class_id = class_id;
        gt[key].push_back(d);
      }
    }
  }
  rsn::write_boxes_jsonl(out_dir + "/gt.jsonl", gt);
  std::cout << "wrote " << scenes << " scene(s) to " << out_dir << "\n";
  return 0;
}

void print_stages(const rsn::PipelineResult& r) {
  for (const rsn::StageStat& s : r.stages)
    std::cout << "  " << s.name << ": " << s.count << " items, " << std::fixed
              << std::setprecision(3) << s.wall_ms << " ms\n"
              << std::defaultfloat;
}

int run_run(const ConfigFlags& flags, const std::string& weights_path,
            std::uint64_t seed, const std::vector<std::string>& stems,
            const std::string& out_path, bool verbose) {
  const rsn::RunConfig cfg = make_config(flags);
  const rsn::ModelWeights w = load_or_init(cfg, weights_path, seed);

  // Stems are one capture-ordered sequence; each window runs latest first.
  const auto windows =
      rsn::regroup_sequence(stems.size(), static_cast<std::size_t>(cfg.frames - 1));
  std::vector<rsn::PipelineResult> results(windows.size());
  rsn::parallel_for(windows.size(), [&](std::size_t wi) {
    std::vector<rsn::FrameInput> frames;
    for (std::size_t idx : windows[wi]) frames.push_back(rsn::load_scene(stems[idx]));
    results[wi] = rsn::run_pipeline(frames, cfg, w);
  });

  std::map<int, std::vector<rsn::Detection>> by_frame;
  for (std::size_t wi = 0; wi < windows.size(); ++wi)
    by_frame[static_cast<int>(wi)] = results[wi].detections;
  rsn::write_detections_jsonl(out_path, by_frame);

  std::size_t total = 0;
  for (const auto& [frame, dets] : by_frame) total += dets.size();
  std::cout << "wrote " << total << " detection(s) to " << out_path << "\n";
  if (verbose)
    for (std::size_t wi = 0; wi < results.size(); ++wi) {
      std::cout << "frame " << wi << ":\n";
      print_stages(results[wi]);
    }
  return 0;
}

int run_bench(const ConfigFlags& flags, const std::string& weights_path,
              std::uint64_t seed, const std::vector<std::string>& stems,
              const std::string& gamma_list, const std::string& out_path) {
  ConfigFlags single = flags;
  single.frames = 1;
  const rsn::RunConfig cfg = make_config(single);
  const rsn::ModelWeights w = load_or_init(cfg, weights_path, seed);

  std::vector<double> gammas;
  std::stringstream ss(gamma_list);
  std::string tok;
  while (std::getline(ss, tok, ',')) gammas.push_back(std::stod(tok));

  std::vector<rsn::FrameInput> scenes;
  for (const std::string& stem : stems) scenes.push_back(rsn::load_scene(stem));

  const auto rows = rsn::bench_gamma_sweep(scenes, cfg, w, gammas);
  const std::string csv = rsn::bench_rows_to_csv(rows);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    rsn::check(out.good(), "cannot open " + out_path);
    out << csv;
    std::cout << "wrote " << rows.size() << " row(s) to " << out_path << "\n";
  }
  return 0;
}

int run_eval(const std::string& dets_path, const std::string& gt_path,
             double iou, const std::string& mode, double max_range,
             const std::string& out_path) {
  const auto dets = rsn::read_detections_jsonl(dets_path);
  const auto gts = rsn::read_detections_jsonl(gt_path);
  const rsn::IouMode iou_mode =
      mode == "bev" ? rsn::IouMode::kBev : rsn::IouMode::k3d;

  const auto in_range = [&](const rsn::Box7& b) {
    return max_range <= 0.0 ||
           std::sqrt(b.cx * b.cx + b.cy * b.cy) <= max_range;
  };

  std::set<int> classes;
  for (const auto& [frame, list] : gts)
    for (const rsn::Detection& d : list)
      if (in_range(d.box)) classes.insert(d.class_id);

  nlohmann::ordered_json report;
  for (int cls : classes) {
    std::map<int, rsn::EvalFrame> frames;
    for (const auto& [frame, list] : gts)
      for (const rsn::Detection& d : list)
        if (d.class_id == cls && in_range(d.box))
          frames[frame].gt_boxes.push_back(d.box);
    for (const auto& [frame, list] : dets)
      for (const rsn::Detection& d : list)
        if (d.class_id == cls && in_range(d.box))
          frames[frame].detections.push_back(d);

    std::vector<rsn::EvalFrame> flat;
    for (auto& [frame, ef] : frames) flat.push_back(std::move(ef));
    const rsn::EvalResult r = rsn::evaluate_ap(flat, iou, iou_mode);

    nlohmann::ordered_json entry;
    entry["ap"] = r.ap;
    entry["aph"] = r.aph;
    entry["mode"] = mode;
    entry["iou_threshold"] = iou;
    entry["num_gt"] = r.num_gt;
    entry["num_det"] = r.num_det;
    report[std::to_string(cls)] = entry;
  }

  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    rsn::check(out.good(), "cannot open " + out_path);
    out << text;
    std::cout << "wrote report to " << out_path << "\n";
  }
  return 0;
}

int run_fuse(const std::vector<std::string>& inputs, double iou,
             int total_sets, const std::string& out_path) {
  std::vector<std::map<int, std::vector<rsn::Detection>>> sets;
  std::set<int> frames;
  for (const std::string& path : inputs) {
    sets.push_back(rsn::read_detections_jsonl(path));
    for (const auto& [frame, list] : sets.back()) frames.insert(frame);
  }

  std::map<int, std::vector<rsn::Detection>> fused;
  for (int frame : frames) {
    std::vector<std::vector<rsn::Detection>> per_source;
    for (const auto& s : sets) {
      const auto it = s.find(frame);
      per_source.push_back(it == s.end() ? std::vector<rsn::Detection>{}
                                         : it->second);
    }
    fused[frame] = rsn::wbf_3d(per_source, iou,
                               total_sets > 0 ? total_sets
                                              : static_cast<int>(inputs.size()));
  }
  rsn::write_detections_jsonl(out_path, fused);
  std::size_t total = 0;
  for (const auto& [frame, list] : fused) total += list.size();
  std::cout << "wrote " << total << " fused detection(s) to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse range-image 3D object detection pipeline"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::uint64_t seed = 0;
  std::string out_dir = "scenes", out_path, weights_path, gamma_list;
  std::string dets_path, gt_path, mode = "3d";
  std::vector<std::string> stems;
  int scenes = 1, total_sets = 0;
  double iou = 0.7, max_range = 0.0;
  bool verbose = false;
  rsn::SynthConfig synth;

  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate synthetic scenes");
  add_config_flags(synth_cmd, flags);
  synth_cmd->add_option("--seed", seed, "Random seed")->required();
  synth_cmd->add_option("--scenes", scenes, "Scene count");
  synth_cmd->add_option("--boxes", synth.num_boxes, "Boxes per scene");
  synth_cmd->add_option("--ground-points", synth.num_ground_points,
                        "Ground clutter points");
  synth_cmd->add_option("--out-dir", out_dir, "Output directory");

  CLI::App* run_cmd = app.add_subcommand("run", "Run the detection pipeline");
  add_config_flags(run_cmd, flags);
  run_cmd->add_option("--weights", weights_path, "RSNW weight file");
  run_cmd->add_option("--seed", seed, "Init seed when no weight file is given");
  run_cmd->add_option("--out", out_path, "Detections JSONL")->required();
  run_cmd->add_option("scenes", stems, "Scene stems, capture order")->required();
  run_cmd->add_flag("--verbose", verbose, "Print per-stage statistics");

  CLI::App* bench_cmd =
      app.add_subcommand("bench-gamma", "Selection threshold sweep");
  add_config_flags(bench_cmd, flags);
  bench_cmd->add_option("--weights", weights_path, "RSNW weight file");
  bench_cmd->add_option("--seed", seed, "Init seed when no weight file is given");
  bench_cmd->add_option("--gammas", gamma_list, "Comma separated gamma values")
      ->required();
  bench_cmd->add_option("--out", out_path, "CSV path (stdout when omitted)");
  bench_cmd->add_option("scenes", stems, "Scene stems")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "AP / APH evaluation");
  eval_cmd->add_option("--dets", dets_path, "Detections JSONL")->required();
  eval_cmd->add_option("--gt", gt_path, "Ground truth JSONL")->required();
  eval_cmd->add_option("--iou", iou, "Matching IoU threshold");
  eval_cmd->add_option("--mode", mode, "Overlap mode: 3d or bev")
      ->check(CLI::IsMember({"3d", "bev"}));
  eval_cmd->add_option("--max-range", max_range,
                       "Keep boxes within this BEV range (0: no filter)");
  eval_cmd->add_option("--out", out_path, "Report JSON (stdout when omitted)");

  CLI::App* fuse_cmd = app.add_subcommand("fuse", "Weighted boxes fusion");
  fuse_cmd->add_option("--out", out_path, "Fused detections JSONL")->required();
  fuse_cmd->add_option("--iou", iou, "Cluster IoU threshold")
      ->default_val(0.55);
  fuse_cmd->add_option("--total-sets", total_sets,
                       "Score normalization denominator (default: input count)");
  fuse_cmd->add_option("inputs", stems, "Detection JSONL files, one per source")
      ->required();

  CLI::App* init_cmd =
      app.add_subcommand("weights-init", "Write freshly initialized weights");
  add_config_flags(init_cmd, flags);
  init_cmd->add_option("--seed", seed, "Random seed")->required();
  init_cmd->add_option("--out", out_path, "RSNW path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return run_synth(flags, seed, scenes, out_dir, synth);
    if (run_cmd->parsed())
      return run_run(flags, weights_path, seed, stems, out_path, verbose);
    if (bench_cmd->parsed())
      return run_bench(flags, weights_path, seed, stems, gamma_list, out_path);
    if (eval_cmd->parsed())
      return run_eval(dets_path, gt_path, iou, mode, max_range, out_path);
    if (fuse_cmd->parsed()) return run_fuse(stems, iou, total_sets, out_path);
    if (init_cmd->parsed()) {
      const rsn::RunConfig cfg = make_config(flags);
      rsn::Rng rng(seed);
      rsn::save_weights(out_path, rsn::model_to_store(cfg, rsn::init_model(cfg, rng)));
      std::cout << "wrote weights to " << out_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
