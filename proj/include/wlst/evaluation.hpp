#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "wlst/errors.hpp"
#include "wlst/geometry.hpp"
#include "wlst/pseudo_label.hpp"

namespace wlst {

using BoxIouFn = std::function<double(const Box3D&, const Box3D&)>;

struct MatchCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct MatchAssignment {
  std::vector<int> pred_to_gt;  // -1 for false positives
  std::vector<bool> gt_matched;
  MatchCounts counts;
};

// Greedy single-claim matching: predictions in descending score order each
// claim the unclaimed ground-truth box with the highest IoU when that IoU
// reaches the threshold. Deterministic; ties go to the lower index.
inline MatchAssignment match_detections(const std::vector<PseudoLabel>& preds,
                                        const std::vector<Box3D>& gts,
                                        const BoxIouFn& iou_fn, double threshold) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });

  MatchAssignment out;
  out.pred_to_gt.assign(preds.size(), -1);
  out.gt_matched.assign(gts.size(), false);
  for (const std::size_t p : order) {
    int best_gt = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (out.gt_matched[g]) continue;
      const double iou = iou_fn(preds[p].box, gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best_iou >= threshold) {
      out.pred_to_gt[p] = best_gt;
      out.gt_matched[best_gt] = true;
      ++out.counts.tp;
    } else {
      ++out.counts.fp;
    }
  }
  out.counts.fn = static_cast<int>(gts.size()) - out.counts.tp;
  return out;
}

// precision = TP/(TP+FP) (1 with no predictions);
// recall = TP/(TP+FN) (1 with no ground truth).
inline std::pair<double, double> precision_recall(const MatchCounts& c) {
  const double precision =
      c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
  const double recall =
      c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  return {precision, recall};
}

struct FrameDetections {
  std::vector<PseudoLabel> preds;
  std::vector<Box3D> gts;
  // Ground truth outside the evaluated difficulty class: predictions landing
  // on these count neither as TP nor FP (KITTI don't-care handling).
  std::vector<Box3D> ignored_gts;
};

inline bool hits_any(const Box3D& pred, const std::vector<Box3D>& boxes,
                     const BoxIouFn& iou_fn, double threshold) {
  for (const Box3D& b : boxes)
    if (iou_fn(pred, b) >= threshold) return true;
  return false;
}

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Global score-sorted sweep producing the raw PR curve. Predictions claim
// per-frame ground truth greedily in global score order.
inline std::vector<PrPoint> pr_sweep(const std::vector<FrameDetections>& frames,
                                     const BoxIouFn& iou_fn, double threshold) {
  struct Ref {
    double score;
    std::size_t frame, index;
  };
  std::vector<Ref> refs;
  std::size_t total_gt = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    total_gt += frames[f].gts.size();
    for (std::size_t i = 0; i < frames[f].preds.size(); ++i)
      refs.push_back({frames[f].preds[i].score, f, i});
  }
  std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  std::vector<std::vector<bool>> claimed(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f)
    claimed[f].assign(frames[f].gts.size(), false);

  std::vector<PrPoint> curve;
  curve.reserve(refs.size());
  std::size_t tp = 0, fp = 0;
  for (const Ref& r : refs) {
    const FrameDetections& fr = frames[r.frame];
    int best_gt = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < fr.gts.size(); ++g) {
      if (claimed[r.frame][g]) continue;
      const double iou = iou_fn(fr.preds[r.index].box, fr.gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best_iou >= threshold) {
      claimed[r.frame][best_gt] = true;
      ++tp;
    } else if (hits_any(fr.preds[r.index].box, fr.ignored_gts, iou_fn, threshold)) {
      continue;  // don't-care region
    } else {
      ++fp;
    }
    curve.push_back({r.score,
                     static_cast<double>(tp) / static_cast<double>(tp + fp),
                     total_gt == 0 ? 0.0
                                   : static_cast<double>(tp) /
                                         static_cast<double>(total_gt)});
  }
  return curve;
}

// Average precision over 40 recall positions: precision interpolated as the
// maximum precision at recall >= r for r in {1/40, ..., 40/40}, in percent.
inline double ap40(const std::vector<FrameDetections>& frames,
                   const BoxIouFn& iou_fn, double threshold) {
  const std::vector<PrPoint> curve = pr_sweep(frames, iou_fn, threshold);
  double sum = 0.0;
  for (int k = 1; k <= 40; ++k) {
    const double r = static_cast<double>(k) / 40.0;
    double best = 0.0;
    for (const PrPoint& p : curve)
      if (p.recall >= r) best = std::max(best, p.precision);
    sum += best;
  }
  return 100.0 * sum / 40.0;
}

// How much of the source-only-to-oracle gap a method closes, in percent.
inline double closed_gap(double ap_method, double ap_source_only, double ap_oracle) {
  const double gap = ap_oracle - ap_source_only;
  if (gap == 0.0)
    throw DivisionByZeroError("closed_gap: oracle equals source-only");
  return (ap_method - ap_source_only) / gap * 100.0;
}

struct EvalReport {
  double ap_bev = 0.0;
  double ap_3d = 0.0;
  double recall_07 = 0.0;     // percent
  double precision_07 = 0.0;  // percent
  MatchCounts counts;         // at the 3D IoU threshold
};

// Frame-set evaluation at the given IoU threshold (default KITTI 0.7).
inline EvalReport evaluate_frames(const std::vector<FrameDetections>& frames,
                                  double iou_threshold = 0.7) {
  EvalReport report;
  const BoxIouFn bev = [](const Box3D& a, const Box3D& b) { return iou_bev(a, b); };
  const BoxIouFn vol = [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); };
  report.ap_bev = ap40(frames, bev, iou_threshold);
  report.ap_3d = ap40(frames, vol, iou_threshold);
  MatchCounts total;
  for (const FrameDetections& f : frames) {
    const MatchAssignment a = match_detections(f.preds, f.gts, vol, iou_threshold);
    total.tp += a.counts.tp;
    total.fn += a.counts.fn;
    if (f.ignored_gts.empty()) {
      total.fp += a.counts.fp;
    } else {
      for (std::size_t p = 0; p < f.preds.size(); ++p)
        if (a.pred_to_gt[p] < 0 &&
            !hits_any(f.preds[p].box, f.ignored_gts, vol, iou_threshold))
          ++total.fp;
    }
  }
  report.counts = total;
  const auto [precision, recall] = precision_recall(total);
  report.precision_07 = 100.0 * precision;
  report.recall_07 = 100.0 * recall;
  return report;
}

}  // namespace wlst
