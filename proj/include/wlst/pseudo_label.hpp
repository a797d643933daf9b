#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "wlst/geometry.hpp"

namespace wlst {

enum class LabelSource { kDetector, kAutolabeler, kFused };

// The (box, s, prob) triple. weak_index records the exact source 2D box for
// autolabeler outputs (-1 when there is no known correspondence).
struct PseudoLabel {
  Box3D box;
  double score = 0.0;  // s in [0, 1]
  double prob = 0.0;   // existence probability in [0, 1]
  LabelSource source = LabelSource::kDetector;
  int weak_index = -1;
};

struct PseudoLabelSet {
  std::string frame_id;
  int iteration = 0;
  std::vector<PseudoLabel> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

enum class NmsMetric { kBev, k3d };

// Greedy descending-score suppression. Ties are broken by smaller center x,
// then input index, so runs are bit-reproducible. Survivors come out sorted
// by score descending.
inline std::vector<PseudoLabel> nms_3d(const std::vector<PseudoLabel>& labels,
                                       double iou_threshold,
                                       NmsMetric metric = NmsMetric::kBev) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (labels[a].score != labels[b].score) return labels[a].score > labels[b].score;
    if (labels[a].box.center.x != labels[b].box.center.x)
      return labels[a].box.center.x < labels[b].box.center.x;
    return a < b;
  });

  std::vector<PseudoLabel> kept;
  kept.reserve(labels.size());
  std::vector<bool> suppressed(labels.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (suppressed[order[i]]) continue;
    const PseudoLabel& survivor = labels[order[i]];
    kept.push_back(survivor);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (suppressed[order[j]]) continue;
      const Box3D& other = labels[order[j]].box;
      const double iou = metric == NmsMetric::kBev ? iou_bev(survivor.box, other)
                                                   : iou_3d(survivor.box, other);
      if (iou > iou_threshold) suppressed[order[j]] = true;
    }
  }
  return kept;
}

inline PseudoLabelSet nms_3d(const PseudoLabelSet& set, double iou_threshold,
                             NmsMetric metric = NmsMetric::kBev) {
  return {set.frame_id, set.iteration, nms_3d(set.labels, iou_threshold, metric)};
}

}  // namespace wlst
