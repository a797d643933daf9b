#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wlst/evaluation.hpp"
#include "wlst/frame.hpp"
#include "wlst/frustum_labeler.hpp"
#include "wlst/fusion.hpp"
#include "wlst/log.hpp"
#include "wlst/parallel.hpp"
#include "wlst/pseudo_label.hpp"
#include "wlst/simulate.hpp"

namespace wlst {

enum class AutolabelerMode { kGeometric, kSimulated };

struct SelfTrainConfig {
  int rounds = 5;
  int num_frames = 300;
  FusionConfig fusion;
  double adaptation_lr = 0.5;
  // Per-round noise-intensity multipliers for the simulated labelers;
  // non-decreasing, padded with the last value. Empty means all 1.0.
  std::vector<double> curriculum;
  AutolabelerMode autolabeler_mode = AutolabelerMode::kGeometric;
  bool fusion_enabled = true;  // false: detector-only ablation
  // Detector NMS runs before existence probabilities are computed; flip to
  // score the raw detections first and suppress afterwards.
  bool nms_before_prob = true;
  LabelerConfig labeler;
  LabelerProfile detector_profile = default_detector_profile();
  LabelerProfile autolabeler_profile = default_autolabeler_profile();
  double adapt_match_iou = 0.3;
  double metrics_iou = 0.7;
  std::uint64_t seed = 0;
  int jobs = 1;
};

inline double curriculum_multiplier(const std::vector<double>& curriculum, int round) {
  if (curriculum.empty()) return 1.0;
  const std::size_t i =
      std::min(static_cast<std::size_t>(round), curriculum.size() - 1);
  return curriculum[i];
}

struct RoundMetrics {
  int round = 0;
  double recall07 = 0.0;
  double precision07 = 0.0;
  double ap_bev = 0.0;
  double ap_3d = 0.0;
  double det_size_bias = 0.0;  // geometric mean over (l, w, h)
  double aut_size_bias = 0.0;
};

struct RoundState {
  int iteration = 0;
  LabelerProfile det_profile;
  LabelerProfile aut_profile;
  std::vector<PseudoLabelSet> cached;  // fused labels of the latest round
  std::vector<RoundMetrics> history;
};

struct FrameGeneration {
  PseudoLabelSet fused;
  PseudoLabelSet raw_det;
  PseudoLabelSet raw_aut;
};

inline double size_bias_scalar(const LabelerProfile& p) {
  return std::cbrt(p.size_bias.x * p.size_bias.y * p.size_bias.z);
}

// One frame of pseudo-label generation: simulated detector (post-NMS), one
// autolabeler output per weak box, existence probabilities, then fusion (or
// the plain score filter in the detector-only ablation).
inline FrameGeneration generate_pseudo_labels(const FrameRecord& frame,
                                              const RoundState& state,
                                              const SelfTrainConfig& cfg,
                                              double noise_mult) {
  FrameGeneration out;

  out.raw_det = simulate_labeler(frame, state.det_profile, cfg.seed, noise_mult);
  PseudoLabelSet det;
  if (cfg.nms_before_prob) {
    det = nms_3d(out.raw_det, cfg.fusion.nms_iou, cfg.fusion.nms_metric);
    populate_existence_probabilities(det, frame.weak, frame.cam);
  } else {
    det = out.raw_det;
    populate_existence_probabilities(det, frame.weak, frame.cam);
    det = nms_3d(det, cfg.fusion.nms_iou, cfg.fusion.nms_metric);
  }

  PseudoLabelSet aut;
  aut.frame_id = frame.frame_id;
  if (cfg.autolabeler_mode == AutolabelerMode::kSimulated) {
    aut = simulate_labeler(frame, state.aut_profile, cfg.seed, noise_mult);
  } else {
    std::vector<PixelPoint> projected = project_to_image(frame.cloud.points, frame.cam);
    for (std::size_t w = 0; w < frame.weak.size(); ++w) {
      LabelerConfig lc = cfg.labeler;
      lc.seed = mix_seed(mix_seed(cfg.seed, hash_id(frame.frame_id)),
                         static_cast<std::uint64_t>(w));
      const AutolabelResult r =
          autolabel(frame.cloud, frame.weak[w], frame.cam, lc, &projected);
      if (!r.label) {
        log_debug("autolabel skip frame " + frame.frame_id + " weak " +
                  std::to_string(w) + ": " + to_string(r.skip));
        continue;
      }
      PseudoLabel label = *r.label;
      label.weak_index = static_cast<int>(w);
      aut.labels.push_back(label);
    }
  }
  populate_existence_probabilities(aut, frame.weak, frame.cam);

  out.raw_aut = aut;
  if (cfg.fusion_enabled) {
    out.fused = consistency_fusion(det, aut, cfg.fusion);
  } else {
    out.fused = score_filter(det, cfg.fusion.score_threshold);
    std::sort(out.fused.labels.begin(), out.fused.labels.end(), canonical_label_less);
  }
  out.fused.iteration = state.iteration + 1;
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct PairAccumulator {
  std::vector<double> ratio_l, ratio_w, ratio_h;
  std::vector<double> off_x, off_y, off_z;

  void add(const Box3D& raw, const Box3D& fused) {
    ratio_l.push_back(raw.length / fused.length);
    ratio_w.push_back(raw.width / fused.width);
    ratio_h.push_back(raw.height / fused.height);
    off_x.push_back(raw.center.x - fused.center.x);
    off_y.push_back(raw.center.y - fused.center.y);
    off_z.push_back(raw.center.z - fused.center.z);
  }

  bool empty() const { return ratio_l.empty(); }
};

inline bool same_box(const Box3D& a, const Box3D& b) {
  return a.center.x == b.center.x && a.center.y == b.center.y &&
         a.center.z == b.center.z && a.length == b.length && a.width == b.width &&
         a.height == b.height && a.yaw == b.yaw;
}

// Greedy one-to-one pairing of raw labels to fused labels by descending
// 3D IoU above the threshold. Fused labels that are verbatim copies of the
// raw box are skipped: a labeler compared against its own output carries no
// correction signal and would pin the median at exactly 1.
inline void accumulate_pairs(const PseudoLabelSet& raw, const PseudoLabelSet& fused,
                             double iou_min, PairAccumulator* acc) {
  struct Pair {
    std::size_t r, f;
    double iou;
  };
  std::vector<Pair> pairs;
  for (std::size_t r = 0; r < raw.size(); ++r)
    for (std::size_t f = 0; f < fused.size(); ++f) {
      if (same_box(raw.labels[r].box, fused.labels[f].box)) continue;
      const double iou = iou_3d(raw.labels[r].box, fused.labels[f].box);
      if (iou > iou_min) pairs.push_back({r, f, iou});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.r != b.r) return a.r < b.r;
    return a.f < b.f;
  });
  std::vector<bool> raw_used(raw.size(), false), fused_used(fused.size(), false);
  for (const Pair& p : pairs) {
    if (raw_used[p.r] || fused_used[p.f]) continue;
    raw_used[p.r] = true;
    fused_used[p.f] = true;
    acc->add(raw.labels[p.r].box, fused.labels[p.f].box);
  }
}

inline bool apply_correction(const PairAccumulator& acc, double lr,
                             LabelerProfile* profile) {
  if (acc.empty()) return false;
  profile->size_bias.x *= std::pow(median(acc.ratio_l), -lr);
  profile->size_bias.y *= std::pow(median(acc.ratio_w), -lr);
  profile->size_bias.z *= std::pow(median(acc.ratio_h), -lr);
  profile->center_bias.x -= lr * median(acc.off_x);
  profile->center_bias.y -= lr * median(acc.off_y);
  profile->center_bias.z -= lr * median(acc.off_z);
  return true;
}

}  // namespace detail

// Desk-scale stand-in for re-training: estimate the median per-axis size
// ratio and center offset between each labeler's raw boxes and the fused
// labels (matched at 3D IoU > adapt_match_iou) and damp the profile biases
// by adaptation_lr. Ground truth is never consulted. Returns false (and
// leaves the profiles unchanged) when no pair matched.
inline bool adaptation_step(RoundState& state,
                            const std::vector<PseudoLabelSet>& fused,
                            const std::vector<PseudoLabelSet>& raw_det,
                            const std::vector<PseudoLabelSet>& raw_aut,
                            const SelfTrainConfig& cfg) {
  // The autolabeler profile only drives generation in simulated mode; the
  // geometric labeler has no bias parameters to correct.
  const bool adapt_aut = cfg.autolabeler_mode == AutolabelerMode::kSimulated;
  detail::PairAccumulator det_acc, aut_acc;
  for (std::size_t f = 0; f < fused.size(); ++f) {
    if (f < raw_det.size())
      detail::accumulate_pairs(raw_det[f], fused[f], cfg.adapt_match_iou, &det_acc);
    if (adapt_aut && f < raw_aut.size())
      detail::accumulate_pairs(raw_aut[f], fused[f], cfg.adapt_match_iou, &aut_acc);
  }
  const bool det_ok =
      detail::apply_correction(det_acc, cfg.adaptation_lr, &state.det_profile);
  const bool aut_ok =
      detail::apply_correction(aut_acc, cfg.adaptation_lr, &state.aut_profile);
  if (!det_ok && !aut_ok) {
    log_warn("adaptation_step: no matched pairs, profiles unchanged");
    return false;
  }
  return true;
}

struct SelfTrainRun {
  RoundState state;
  EvalReport final_report;
};

// The self-training loop: per round, regenerate pseudo labels on every
// frame, snapshot recall/precision/AP against ground truth (metrics only),
// then run the adaptation step.
inline SelfTrainRun run_self_training(const std::vector<FrameRecord>& dataset,
                                      const SelfTrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("run_self_training: empty dataset");

  SelfTrainRun run;
  RoundState& state = run.state;
  state.det_profile = cfg.detector_profile;
  state.aut_profile = cfg.autolabeler_profile;

  for (int round = 0; round < cfg.rounds; ++round) {
    const double noise_mult = curriculum_multiplier(cfg.curriculum, round);
    std::vector<FrameGeneration> generated(dataset.size());
    parallel_for(dataset.size(), cfg.jobs, [&](std::size_t i) {
      generated[i] = generate_pseudo_labels(dataset[i], state, cfg, noise_mult);
    });

    std::vector<FrameDetections> dets;
    dets.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      FrameDetections fd;
      fd.preds = generated[i].fused.labels;
      if (dataset[i].gt3d) fd.gts = *dataset[i].gt3d;
      dets.push_back(std::move(fd));
    }
    const EvalReport report = evaluate_frames(dets, cfg.metrics_iou);

    RoundMetrics metrics;
    metrics.round = round + 1;
    metrics.recall07 = report.recall_07;
    metrics.precision07 = report.precision_07;
    metrics.ap_bev = report.ap_bev;
    metrics.ap_3d = report.ap_3d;
    metrics.det_size_bias = size_bias_scalar(state.det_profile);
    metrics.aut_size_bias = size_bias_scalar(state.aut_profile);
    state.history.push_back(metrics);
    run.final_report = report;

    state.cached.clear();
    state.cached.reserve(generated.size());
    std::vector<PseudoLabelSet> raw_det, raw_aut;
    raw_det.reserve(generated.size());
    raw_aut.reserve(generated.size());
    for (FrameGeneration& g : generated) {
      state.cached.push_back(std::move(g.fused));
      raw_det.push_back(std::move(g.raw_det));
      raw_aut.push_back(std::move(g.raw_aut));
    }
    adaptation_step(state, state.cached, raw_det, raw_aut, cfg);
    state.iteration = round + 1;
  }
  return run;
}

}  // namespace wlst
