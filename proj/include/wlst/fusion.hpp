#pragma once

#include <algorithm>
#include <optional>
#include <tuple>
#include <vector>

#include "wlst/camera.hpp"
#include "wlst/geometry.hpp"
#include "wlst/pseudo_label.hpp"

namespace wlst {

struct FusionConfig {
  double t_exist = 0.7;      // existence-probability gate for matching
  double iou3d_min = 0.1;    // strict lower bound on pairwise 3D IoU
  double score_threshold = 0.6;  // T: final confidence filter
  double nms_iou = 0.5;      // detector pre-step NMS threshold
  bool nms_on_fused = false; // optional extra NMS pass on the fused set
  NmsMetric nms_metric = NmsMetric::kBev;
};

// Convex hull of the box corners re-projected into the image. Empty when a
// corner falls behind the camera or the projection collapses.
inline std::optional<ConvexPolygon2D> reprojected_hull(const Box3D& box,
                                                       const CameraModel& cam) {
  const auto corners = corners_3d(box);
  std::vector<Vec2> px;
  px.reserve(8);
  for (const Vec3& c : corners) {
    const PixelPoint p = cam.project(c);
    if (p.depth <= kGeomEps) return std::nullopt;
    px.push_back({p.u, p.v});
  }
  try {
    return convex_hull(px);
  } catch (const DegenerateHullError&) {
    return std::nullopt;
  }
}

// Existence probability of a pseudo label. With an exact corresponding 2D
// box (autolabeler path) it is the hull-vs-box 2D IoU; otherwise it is the
// maximum 2D IoU over all weak boxes. Degenerate geometry maps to 0.
inline double existence_probability(const PseudoLabel& label,
                                    const std::vector<Box2D>& weak,
                                    const CameraModel& cam,
                                    const std::optional<Box2D>& corresponding =
                                        std::nullopt) {
  const std::optional<ConvexPolygon2D> hull = reprojected_hull(label.box, cam);
  if (!hull) return 0.0;
  if (corresponding) return polygon_rect_iou(*hull, *corresponding);
  double best = 0.0;
  for (const Box2D& w : weak) best = std::max(best, polygon_rect_iou(*hull, w));
  return best;
}

// Pairwise 3D IoU matrix, detector rows x autolabeler columns.
inline std::vector<std::vector<double>> build_iou_matrix(
    const PseudoLabelSet& det, const PseudoLabelSet& aut) {
  std::vector<std::vector<double>> iou(det.size(),
                                       std::vector<double>(aut.size(), 0.0));
  for (std::size_t j = 0; j < det.size(); ++j)
    for (std::size_t k = 0; k < aut.size(); ++k)
      iou[j][k] = iou_3d(det.labels[j].box, aut.labels[k].box);
  return iou;
}

// Canonical total order on labels: score descending, then box geometry.
// Sorting both input sets with it makes fusion invariant to input
// permutations, bit for bit.
inline bool canonical_label_less(const PseudoLabel& a, const PseudoLabel& b) {
  if (a.score != b.score) return a.score > b.score;
  const auto key = [](const PseudoLabel& l) {
    return std::make_tuple(l.box.center.x, l.box.center.y, l.box.center.z,
                           l.box.yaw, l.box.length, l.box.width, l.box.height,
                           l.prob);
  };
  return key(a) < key(b);
}

inline PseudoLabelSet score_filter(const PseudoLabelSet& set, double threshold) {
  PseudoLabelSet out{set.frame_id, set.iteration, {}};
  out.labels.reserve(set.size());
  for (const PseudoLabel& l : set.labels)
    if (l.score >= threshold) out.labels.push_back(l);
  return out;
}

struct FusionStats {
  std::size_t detector_in = 0;
  std::size_t autolabeler_in = 0;
  std::size_t matched_pairs = 0;
  std::size_t kept = 0;
};

// Consistency fusion: match detector and autolabeler pseudo labels that
// agree geometrically (existence probability) and across modalities (3D
// IoU), keep the higher-confidence box of each matched pair, down-weight
// everything unmatched by its existence probability, then filter.
//
// prob fields must already be populated. det is expected post-NMS.
inline PseudoLabelSet consistency_fusion(const PseudoLabelSet& det_in,
                                         const PseudoLabelSet& aut_in,
                                         const FusionConfig& cfg,
                                         FusionStats* stats = nullptr) {
  PseudoLabelSet det = det_in;
  PseudoLabelSet aut = aut_in;
  std::sort(det.labels.begin(), det.labels.end(), canonical_label_less);
  std::sort(aut.labels.begin(), aut.labels.end(), canonical_label_less);

  const std::vector<std::vector<double>> iou = build_iou_matrix(det, aut);

  // Candidate pairs satisfying max(prob_u, prob_v) >= T_exist (note: >=)
  // and iou > iou3d_min (note: strict), ordered for greedy one-to-one
  // assignment by descending IoU, then combined score, then indices.
  struct Pair {
    std::size_t j, k;
    double iou, combined;
  };
  std::vector<Pair> pairs;
  for (std::size_t j = 0; j < det.size(); ++j)
    for (std::size_t k = 0; k < aut.size(); ++k) {
      if (std::max(det.labels[j].prob, aut.labels[k].prob) < cfg.t_exist) continue;
      if (iou[j][k] <= cfg.iou3d_min) continue;
      pairs.push_back({j, k, iou[j][k], det.labels[j].score + aut.labels[k].score});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.combined != b.combined) return a.combined > b.combined;
    if (a.j != b.j) return a.j < b.j;
    return a.k < b.k;
  });

  std::vector<bool> det_used(det.size(), false);
  std::vector<bool> aut_used(aut.size(), false);
  PseudoLabelSet out{det_in.frame_id.empty() ? aut_in.frame_id : det_in.frame_id,
                     det_in.iteration, {}};
  std::size_t matched = 0;
  for (const Pair& p : pairs) {
    if (det_used[p.j] || aut_used[p.k]) continue;
    det_used[p.j] = true;
    aut_used[p.k] = true;
    ++matched;
    // Keep the member with the higher confidence score; on an exact tie
    // keep the autolabeler box (the higher-precision modality).
    PseudoLabel fused = det.labels[p.j].score > aut.labels[p.k].score
                            ? det.labels[p.j]
                            : aut.labels[p.k];
    fused.source = LabelSource::kFused;
    out.labels.push_back(fused);
  }

  // Unmatched boxes from either set: s <- s * prob.
  for (std::size_t j = 0; j < det.size(); ++j) {
    if (det_used[j]) continue;
    PseudoLabel l = det.labels[j];
    l.score *= l.prob;
    out.labels.push_back(l);
  }
  for (std::size_t k = 0; k < aut.size(); ++k) {
    if (aut_used[k]) continue;
    PseudoLabel l = aut.labels[k];
    l.score *= l.prob;
    out.labels.push_back(l);
  }

  out = score_filter(out, cfg.score_threshold);
  std::sort(out.labels.begin(), out.labels.end(), canonical_label_less);
  if (cfg.nms_on_fused) out = nms_3d(out, cfg.nms_iou, cfg.nms_metric);

  if (stats) {
    stats->detector_in = det.size();
    stats->autolabeler_in = aut.size();
    stats->matched_pairs = matched;
    stats->kept = out.size();
  }
  return out;
}

// Fill prob for every label: exact weak-box correspondence when the label
// carries one, max over all weak boxes otherwise.
inline void populate_existence_probabilities(PseudoLabelSet& set,
                                             const std::vector<Box2D>& weak,
                                             const CameraModel& cam) {
  for (PseudoLabel& l : set.labels) {
    const bool has_exact =
        l.weak_index >= 0 && l.weak_index < static_cast<int>(weak.size());
    l.prob = has_exact
                 ? existence_probability(l, weak, cam, weak[l.weak_index])
                 : existence_probability(l, weak, cam);
  }
}

// Convenience entry point that computes existence probabilities itself.
inline PseudoLabelSet consistency_fusion(const PseudoLabelSet& det,
                                         const PseudoLabelSet& aut,
                                         const std::vector<Box2D>& weak,
                                         const CameraModel& cam,
                                         const FusionConfig& cfg,
                                         FusionStats* stats = nullptr) {
  PseudoLabelSet det_p = det;
  PseudoLabelSet aut_p = aut;
  populate_existence_probabilities(det_p, weak, cam);
  populate_existence_probabilities(aut_p, weak, cam);
  return consistency_fusion(det_p, aut_p, cfg, stats);
}

}  // namespace wlst
