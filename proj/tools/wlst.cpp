// wlst: pseudo-label generation, fusion, evaluation and self-training over
// KITTI-layout datasets or the built-in simulator.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wlst/wlst.hpp"

namespace fs = std::filesystem;
using namespace wlst;

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool dry_run = false;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{}
                                           : load_run_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.scene.seed = *args.seed;
  }
  if (args.jobs) {
    if (*args.jobs < 1) throw ConfigError("--jobs must be >= 1");
    cfg.jobs = *args.jobs;
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "JSON config file");
  cmd->add_option("--seed", args->seed, "master seed (overrides config)");
  cmd->add_option("--jobs", args->jobs, "worker threads (overrides config)");
  cmd->add_flag("--dry-run", args->dry_run, "validate config and exit");
}

std::vector<std::string> require_ids(const fs::path& dir, const std::string& ext) {
  if (!fs::exists(dir)) throw Error("missing directory: " + dir.string());
  return list_frame_ids(dir, ext);
}

CameraModel load_calib_file(const fs::path& path, const IoOptions& io) {
  try {
    return parse_kitti_calib(read_text_file(path), io.image_width, io.image_height);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

PseudoLabelSet load_label_set(const fs::path& path, const CameraModel& cam,
                              const std::string& frame_id, LabelSource source) {
  PseudoLabelSet set;
  set.frame_id = frame_id;
  if (!fs::exists(path)) return set;
  for (const KittiLabel& l : parse_kitti_label_file(read_text_file(path))) {
    if (l.type != "Car") continue;
    PseudoLabel label;
    label.box = label_to_box3d(l, cam);
    label.score = l.score.value_or(1.0);
    label.source = source;
    set.labels.push_back(label);
  }
  return set;
}

std::vector<Box2D> load_weak_boxes(const fs::path& path, const CameraModel& cam) {
  std::vector<Box2D> weak;
  if (!fs::exists(path)) return weak;
  for (const KittiLabel& l : parse_kitti_label_file(read_text_file(path))) {
    if (l.type != "Car") continue;
    const Box2D clamped{
        std::clamp(l.bbox.x_min, 0.0, static_cast<double>(cam.image_width)),
        std::clamp(l.bbox.y_min, 0.0, static_cast<double>(cam.image_height)),
        std::clamp(l.bbox.x_max, 0.0, static_cast<double>(cam.image_width)),
        std::clamp(l.bbox.y_max, 0.0, static_cast<double>(cam.image_height))};
    if (is_valid(clamped)) weak.push_back(clamped);
  }
  return weak;
}

std::string labels_to_kitti(const std::vector<PseudoLabel>& labels,
                            const CameraModel& cam, bool with_score) {
  std::vector<KittiLabel> records;
  records.reserve(labels.size());
  for (const PseudoLabel& l : labels)
    records.push_back(box3d_to_label(
        l.box, cam, with_score ? std::optional<double>(l.score) : std::nullopt));
  return write_kitti_label(records);
}

// ---------------------------------------------------------------------------
// autolabel
// ---------------------------------------------------------------------------

int cmd_autolabel(const fs::path& dataset_dir, const fs::path& out_dir,
                  const RunConfig& cfg) {
  const std::vector<std::string> ids = require_ids(dataset_dir / "velodyne", ".bin");
  fs::create_directories(out_dir);

  struct FrameOut {
    std::string text;
    int objects = 0;
    int labeled = 0;
    std::array<int, 4> skips{};  // indexed by SkipReason
  };
  std::vector<FrameOut> results(ids.size());

  FrameLoadOptions load_opts;
  load_opts.image_width = cfg.io.image_width;
  load_opts.image_height = cfg.io.image_height;
  load_opts.range_filter = cfg.io.range_filter;

  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    const FrameRecord frame = load_frame(dataset_dir, ids[i], load_opts);
    const std::vector<PixelPoint> projected =
        project_to_image(frame.cloud.points, frame.cam);
    PseudoLabelSet set;
    set.frame_id = frame.frame_id;
    FrameOut& out = results[i];
    out.objects = static_cast<int>(frame.weak.size());
    for (std::size_t w = 0; w < frame.weak.size(); ++w) {
      LabelerConfig lc = cfg.labeler;
      lc.seed = mix_seed(mix_seed(cfg.seed, hash_id(frame.frame_id)),
                         static_cast<std::uint64_t>(w));
      const AutolabelResult r =
          autolabel(frame.cloud, frame.weak[w], frame.cam, lc, &projected);
      if (!r.label) {
        ++out.skips[static_cast<int>(r.skip)];
        continue;
      }
      PseudoLabel label = *r.label;
      label.weak_index = static_cast<int>(w);
      set.labels.push_back(label);
      ++out.labeled;
    }
    std::sort(set.labels.begin(), set.labels.end(), canonical_label_less);
    out.text = labels_to_kitti(set.labels, frame.cam, /*with_score=*/true);
  });

  int objects = 0, labeled = 0;
  std::array<int, 4> skips{};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    write_text_file(out_dir / (ids[i] + ".txt"), results[i].text);
    objects += results[i].objects;
    labeled += results[i].labeled;
    for (int s = 0; s < 4; ++s) skips[s] += results[i].skips[s];
  }
  std::printf(
      "autolabel: %zu frames, %d weak objects, %d labeled, skips: "
      "empty_frustum=%d no_foreground=%d degenerate_fit=%d\n",
      ids.size(), objects, labeled,
      skips[static_cast<int>(SkipReason::kEmptyFrustum)],
      skips[static_cast<int>(SkipReason::kNoForeground)],
      skips[static_cast<int>(SkipReason::kDegenerateFit)]);
  return 0;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

int cmd_fuse(const fs::path& det_dir, const fs::path& aut_dir,
             const fs::path& weak_dir, const fs::path& calib_dir,
             const fs::path& out_dir, const RunConfig& cfg) {
  const std::vector<std::string> ids = require_ids(det_dir, ".txt");
  const std::vector<std::string> weak_ids = require_ids(weak_dir, ".txt");
  const std::vector<std::string> calib_ids = require_ids(calib_dir, ".txt");
  const std::vector<std::string> aut_ids =
      fs::exists(aut_dir) ? list_frame_ids(aut_dir, ".txt") : std::vector<std::string>{};

  const auto mismatch = [&](const std::vector<std::string>& other,
                            const std::string& name) {
    if (ids == other) return;
    std::set<std::string> a(ids.begin(), ids.end());
    std::set<std::string> b(other.begin(), other.end());
    std::string diff;
    for (const std::string& id : a)
      if (!b.count(id)) diff += " -" + id;
    for (const std::string& id : b)
      if (!a.count(id)) diff += " +" + id;
    throw FrameMismatchError("frame ids of " + name +
                             " do not match detector labels:" + diff);
  };
  mismatch(weak_ids, "weak labels");
  mismatch(calib_ids, "calib");
  for (const std::string& id : aut_ids)
    if (!std::binary_search(ids.begin(), ids.end(), id))
      throw FrameMismatchError("autolabeler frame " + id + " has no detector frame");

  fs::create_directories(out_dir);

  struct FrameOut {
    std::string text;
    FusionStats stats;
  };
  std::vector<FrameOut> results(ids.size());

  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    const std::string& id = ids[i];
    const CameraModel cam = load_calib_file(calib_dir / (id + ".txt"), cfg.io);
    PseudoLabelSet det = load_label_set(det_dir / (id + ".txt"), cam, id,
                                        LabelSource::kDetector);
    const PseudoLabelSet aut = load_label_set(aut_dir / (id + ".txt"), cam, id,
                                              LabelSource::kAutolabeler);
    const std::vector<Box2D> weak = load_weak_boxes(weak_dir / (id + ".txt"), cam);

    det = nms_3d(det, cfg.fusion.nms_iou, cfg.fusion.nms_metric);
    const PseudoLabelSet fused =
        consistency_fusion(det, aut, weak, cam, cfg.fusion, &results[i].stats);
    results[i].text = labels_to_kitti(fused.labels, cam, /*with_score=*/true);
  });

  std::string csv = "frame_id,n_u,n_v,matched,kept\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    write_text_file(out_dir / (ids[i] + ".txt"), results[i].text);
    const FusionStats& s = results[i].stats;
    csv += ids[i] + "," + std::to_string(s.detector_in) + "," +
           std::to_string(s.autolabeler_in) + "," + std::to_string(s.matched_pairs) +
           "," + std::to_string(s.kept) + "\n";
  }
  write_text_file(out_dir / "fusion_stats.csv", csv);
  std::printf("fuse: %zu frames\n", ids.size());
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

bool difficulty_qualifies(const KittiLabel& l, Difficulty d) {
  const double h = l.bbox.height();
  switch (d) {
    case Difficulty::kEasy:
      return h >= 40.0 && l.occlusion <= 0 && l.truncation <= 0.15;
    case Difficulty::kModerate:
      return h >= 25.0 && l.occlusion <= 1 && l.truncation <= 0.30;
    case Difficulty::kHard:
      return h >= 25.0 && l.occlusion <= 2 && l.truncation <= 0.50;
    default:
      return true;
  }
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir,
             const fs::path& calib_dir, const RunConfig& cfg,
             const std::string& pr_csv) {
  const std::vector<std::string> ids = require_ids(gt_dir, ".txt");
  const std::vector<std::string> calib_ids = require_ids(calib_dir, ".txt");
  if (ids != calib_ids)
    throw FrameMismatchError("gt and calib directories cover different frames");

  std::vector<FrameDetections> frames(ids.size());
  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    const std::string& id = ids[i];
    const CameraModel cam = load_calib_file(calib_dir / (id + ".txt"), cfg.io);
    frames[i].preds =
        load_label_set(pred_dir / (id + ".txt"), cam, id, LabelSource::kFused).labels;
    for (const KittiLabel& l :
         parse_kitti_label_file(read_text_file(gt_dir / (id + ".txt")))) {
      if (l.type != "Car") continue;
      if (l.height <= 0.0 || l.width <= 0.0 || l.length <= 0.0) continue;
      const Box3D box = label_to_box3d(l, cam);
      if (difficulty_qualifies(l, cfg.eval.difficulty))
        frames[i].gts.push_back(box);
      else
        frames[i].ignored_gts.push_back(box);
    }
  });

  const EvalReport report = evaluate_frames(frames, cfg.eval.iou_threshold);
  std::printf("frames          %zu\n", frames.size());
  std::printf("AP_BEV          %s\n", fmt6(report.ap_bev).c_str());
  std::printf("AP_3D           %s\n", fmt6(report.ap_3d).c_str());
  std::printf("recall@%.2f     %s\n", cfg.eval.iou_threshold,
              fmt6(report.recall_07).c_str());
  std::printf("precision@%.2f  %s\n", cfg.eval.iou_threshold,
              fmt6(report.precision_07).c_str());
  std::printf("TP/FP/FN        %d/%d/%d\n", report.counts.tp, report.counts.fp,
              report.counts.fn);

  if (!pr_csv.empty()) {
    const BoxIouFn vol = [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); };
    std::string csv = "score,precision,recall\n";
    for (const PrPoint& p : pr_sweep(frames, vol, cfg.eval.iou_threshold))
      csv += fmt6(p.score) + "," + fmt6(p.precision) + "," + fmt6(p.recall) + "\n";
    write_text_file(pr_csv, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const fs::path& out_dir, int num_frames, const RunConfig& cfg,
                 const std::string& det_out) {
  fs::create_directories(out_dir / "velodyne");
  fs::create_directories(out_dir / "calib");
  fs::create_directories(out_dir / "label_2");
  fs::create_directories(out_dir / "weak_label");
  if (!det_out.empty()) fs::create_directories(det_out);

  std::vector<FrameRecord> frames(num_frames);
  std::vector<std::string> det_text(num_frames);
  parallel_for(static_cast<std::size_t>(num_frames), cfg.jobs, [&](std::size_t i) {
    frames[i] = generate_scene(cfg.scene, static_cast<int>(i));
    if (!det_out.empty()) {
      const PseudoLabelSet det =
          simulate_labeler(frames[i], cfg.detector_profile, cfg.seed);
      det_text[i] = labels_to_kitti(det.labels, frames[i].cam, /*with_score=*/true);
    }
  });

  for (int i = 0; i < num_frames; ++i) {
    const FrameRecord& frame = frames[i];
    save_point_cloud(out_dir / "velodyne" / (frame.frame_id + ".bin"), frame.cloud);
    write_text_file(out_dir / "calib" / (frame.frame_id + ".txt"),
                    write_kitti_calib(frame.cam));

    std::vector<KittiLabel> gt_records;
    for (const Box3D& box : *frame.gt3d)
      gt_records.push_back(box3d_to_label(box, frame.cam));
    write_text_file(out_dir / "label_2" / (frame.frame_id + ".txt"),
                    write_kitti_label(gt_records));

    std::vector<KittiLabel> weak_records;
    for (const Box2D& weak : frame.weak) {
      KittiLabel l;  // 2D-only line, KITTI dummy 3D fields
      l.type = "Car";
      l.bbox = weak;
      l.height = l.width = l.length = -1.0;
      l.location = {-1000.0, -1000.0, -1000.0};
      l.rotation_y = -10.0;
      weak_records.push_back(l);
    }
    write_text_file(out_dir / "weak_label" / (frame.frame_id + ".txt"),
                    write_kitti_label(weak_records));

    if (!det_out.empty())
      write_text_file(fs::path(det_out) / (frame.frame_id + ".txt"), det_text[i]);
  }
  std::printf("simulate: wrote %d frames to %s\n", num_frames,
              out_dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// selftrain
// ---------------------------------------------------------------------------

int cmd_selftrain(const RunConfig& cfg, const fs::path& out_dir) {
  SelfTrainConfig st = cfg.make_selftrain_config();
  std::vector<FrameRecord> dataset(st.num_frames);
  parallel_for(static_cast<std::size_t>(st.num_frames), cfg.jobs, [&](std::size_t i) {
    dataset[i] = generate_scene(cfg.scene, static_cast<int>(i));
  });

  const SelfTrainRun run = run_self_training(dataset, st);

  fs::create_directories(out_dir);
  std::string csv = "round,recall07,precision07,ap_bev,ap_3d,det_size_bias,aut_size_bias\n";
  for (const RoundMetrics& m : run.state.history) {
    csv += std::to_string(m.round) + "," + fmt6(m.recall07) + "," +
           fmt6(m.precision07) + "," + fmt6(m.ap_bev) + "," + fmt6(m.ap_3d) + "," +
           fmt6(m.det_size_bias) + "," + fmt6(m.aut_size_bias) + "\n";
  }
  write_text_file(out_dir / "selftrain_rounds.csv", csv);

  for (const RoundMetrics& m : run.state.history)
    std::printf("round %d: recall07=%s precision07=%s ap_bev=%s ap_3d=%s\n", m.round,
                fmt6(m.recall07).c_str(), fmt6(m.precision07).c_str(),
                fmt6(m.ap_bev).c_str(), fmt6(m.ap_3d).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak-label guided pseudo-label fusion and self-training"};
  app.require_subcommand(1);

  CommonArgs autolabel_args, fuse_args, eval_args, simulate_args, selftrain_args;
  std::string autolabel_dataset, autolabel_out;
  std::string fuse_det, fuse_aut, fuse_weak, fuse_calib, fuse_out;
  std::string eval_pred, eval_gt, eval_calib, eval_pr_csv;
  std::string simulate_out, simulate_det_out;
  int simulate_frames = 20;
  std::string selftrain_out = ".";

  CLI::App* autolabel_cmd =
      app.add_subcommand("autolabel", "run the frustum autolabeler on a dataset");
  autolabel_cmd->add_option("dataset_dir", autolabel_dataset)->required();
  autolabel_cmd->add_option("out_dir", autolabel_out)->required();
  add_common(autolabel_cmd, &autolabel_args);

  CLI::App* fuse_cmd =
      app.add_subcommand("fuse", "fuse detector and autolabeler pseudo labels");
  fuse_cmd->add_option("det_dir", fuse_det)->required();
  fuse_cmd->add_option("aut_dir", fuse_aut)->required();
  fuse_cmd->add_option("weak_dir", fuse_weak)->required();
  fuse_cmd->add_option("calib_dir", fuse_calib)->required();
  fuse_cmd->add_option("out_dir", fuse_out)->required();
  add_common(fuse_cmd, &fuse_args);

  CLI::App* eval_cmd = app.add_subcommand("eval", "KITTI-style evaluation");
  eval_cmd->add_option("pred_dir", eval_pred)->required();
  eval_cmd->add_option("gt_dir", eval_gt)->required();
  eval_cmd->add_option("calib_dir", eval_calib)->required();
  eval_cmd->add_option("--pr-csv", eval_pr_csv, "write the PR sweep CSV here");
  add_common(eval_cmd, &eval_args);

  CLI::App* simulate_cmd =
      app.add_subcommand("simulate", "write a synthetic KITTI-layout dataset");
  simulate_cmd->add_option("out_dir", simulate_out)->required();
  simulate_cmd->add_option("--frames", simulate_frames, "number of frames");
  simulate_cmd->add_option("--det-out", simulate_det_out,
                           "also write simulated detector outputs here");
  add_common(simulate_cmd, &simulate_args);

  CLI::App* selftrain_cmd =
      app.add_subcommand("selftrain", "run the self-training loop on simulated data");
  selftrain_cmd->add_option("--out", selftrain_out, "output directory for metrics CSV");
  add_common(selftrain_cmd, &selftrain_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (autolabel_cmd->parsed()) {
      const RunConfig cfg = resolve_config(autolabel_args);
      if (autolabel_args.dry_run) return (std::printf("config ok\n"), 0);
      return cmd_autolabel(autolabel_dataset, autolabel_out, cfg);
    }
    if (fuse_cmd->parsed()) {
      const RunConfig cfg = resolve_config(fuse_args);
      if (fuse_args.dry_run) return (std::printf("config ok\n"), 0);
      return cmd_fuse(fuse_det, fuse_aut, fuse_weak, fuse_calib, fuse_out, cfg);
    }
    if (eval_cmd->parsed()) {
      const RunConfig cfg = resolve_config(eval_args);
      if (eval_args.dry_run) return (std::printf("config ok\n"), 0);
      return cmd_eval(eval_pred, eval_gt, eval_calib, cfg, eval_pr_csv);
    }
    if (simulate_cmd->parsed()) {
      const RunConfig cfg = resolve_config(simulate_args);
      if (simulate_args.dry_run) return (std::printf("config ok\n"), 0);
      return cmd_simulate(simulate_out, simulate_frames, cfg, simulate_det_out);
    }
    if (selftrain_cmd->parsed()) {
      const RunConfig cfg = resolve_config(selftrain_args);
      if (selftrain_args.dry_run) return (std::printf("config ok\n"), 0);
      return cmd_selftrain(cfg, selftrain_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
