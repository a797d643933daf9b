#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <functional>

#include "support/oracles.hpp"
#include "wlst/evaluation.hpp"
#include "wlst/rng.hpp"

using namespace wlst;

namespace {

const BoxIouFn kIou3d = [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); };

PseudoLabel pred(const Box3D& box, double score) {
  PseudoLabel l;
  l.box = box;
  l.score = score;
  return l;
}

// Maximum-cardinality matching at the threshold via exhaustive assignment
// enumeration (preds <= 6); used to measure greedy divergence.
int optimal_tp(const std::vector<PseudoLabel>& preds, const std::vector<Box3D>& gts,
               double thr) {
  std::vector<std::vector<int>> feasible(preds.size());
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g)
      if (kIou3d(preds[p].box, gts[g]) >= thr) feasible[p].push_back(static_cast<int>(g));
  int best = 0;
  std::vector<bool> used(gts.size(), false);
  const std::function<void(std::size_t, int)> rec = [&](std::size_t p, int count) {
    best = std::max(best, count);
    if (p == preds.size()) return;
    rec(p + 1, count);
    for (const int g : feasible[p])
      if (!used[g]) {
        used[g] = true;
        rec(p + 1, count + 1);
        used[g] = false;
      }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST_CASE("perfect predictions are all true positives", "[evaluation]") {
  Rng rng(401);
  std::vector<Box3D> gts;
  std::vector<PseudoLabel> preds;
  for (int i = 0; i < 8; ++i) {
    const Box3D b = oracles::random_box(rng, 20.0);
    gts.push_back(b);
    preds.push_back(pred(b, rng.uniform(0.5, 1.0)));
  }
  const MatchAssignment m = match_detections(preds, gts, kIou3d, 0.7);
  CHECK(m.counts.tp == 8);
  CHECK(m.counts.fp == 0);
  CHECK(m.counts.fn == 0);
}

TEST_CASE("a single ground truth is claimed once", "[evaluation]") {
  const Box3D gt = make_box3d({10, 0, 0.8}, 4.2, 1.8, 1.6, 0.2);
  const std::vector<PseudoLabel> preds{pred(gt, 0.9), pred(gt, 0.8)};
  const MatchAssignment m = match_detections(preds, {gt}, kIou3d, 0.7);
  CHECK(m.counts.tp == 1);
  CHECK(m.counts.fp == 1);
  CHECK(m.counts.fn == 0);
  CHECK(m.pred_to_gt[0] == 0);  // the higher score claims it
  CHECK(m.pred_to_gt[1] == -1);
}

TEST_CASE("greedy matching tracks the optimal assignment on small instances",
          "[evaluation][oracle]") {
  Rng rng(409);
  int divergences = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    std::vector<Box3D> gts;
    std::vector<PseudoLabel> preds;
    const std::size_t ng = 1 + rng.uniform_index(5);
    for (std::size_t g = 0; g < ng; ++g) gts.push_back(oracles::random_box(rng, 4.0));
    const std::size_t np = 1 + rng.uniform_index(5);
    for (std::size_t p = 0; p < np; ++p) {
      Box3D b = gts[rng.uniform_index(gts.size())];
      b.center.x += rng.uniform(-0.6, 0.6);
      b.center.y += rng.uniform(-0.6, 0.6);
      preds.push_back(pred(b, rng.uniform()));
    }
    std::sort(preds.begin(), preds.end(),
              [](const PseudoLabel& a, const PseudoLabel& b) { return a.score > b.score; });
    const int greedy = match_detections(preds, gts, kIou3d, 0.5).counts.tp;
    const int optimal = optimal_tp(preds, gts, 0.5);
    CHECK(greedy <= optimal);
    if (greedy != optimal) ++divergences;
  }
  // Greedy score-order matching can fall short of the optimal assignment;
  // the divergence rate is measured, not hidden. It stays rare on random
  // geometry.
  INFO("greedy/optimal divergences: " << divergences << "/" << trials);
  CHECK(divergences <= trials / 20);
}

TEST_CASE("precision_recall conventions", "[evaluation]") {
  CHECK(precision_recall({10, 0, 0}) == std::make_pair(1.0, 1.0));
  CHECK(precision_recall({0, 0, 5}) == std::make_pair(1.0, 0.0));
  CHECK(precision_recall({0, 3, 0}).first == 0.0);
  const auto [p, r] = precision_recall({6, 2, 4});
  CHECK(p == Catch::Approx(0.75));
  CHECK(r == Catch::Approx(0.6));
}

TEST_CASE("reported precision/recall pair reproduces from injected counts",
          "[evaluation]") {
  // 45.54% recall and 72.48% precision arise from e.g. TP=4554, FP=1729,
  // FN=5446 (out of 10000 ground-truth objects).
  const MatchCounts counts{4554, 1729, 5446};
  const auto [p, r] = precision_recall(counts);
  CHECK(100.0 * r == Catch::Approx(45.54).margin(0.005));
  CHECK(100.0 * p == Catch::Approx(72.48).margin(0.005));
}

TEST_CASE("ap40 endpoints", "[evaluation]") {
  Rng rng(419);
  std::vector<FrameDetections> frames(3);
  for (FrameDetections& f : frames)
    for (int i = 0; i < 5; ++i) {
      const Box3D b = oracles::random_box(rng, 15.0);
      f.gts.push_back(b);
      f.preds.push_back(pred(b, rng.uniform(0.4, 1.0)));
    }
  CHECK(ap40(frames, kIou3d, 0.7) == Catch::Approx(100.0));

  for (FrameDetections& f : frames) f.preds.clear();
  CHECK(ap40(frames, kIou3d, 0.7) == 0.0);
}

TEST_CASE("ap40 equals a hand-unrolled interpolation on a toy case", "[evaluation]") {
  // Three frames, five predictions with known TP/FP pattern by score order:
  // TP, FP, TP, TP, FP over 4 ground truths.
  const Box3D g1 = make_box3d({10, 0, 0.8}, 4, 2, 1.6, 0.0);
  const Box3D g2 = make_box3d({20, 4, 0.8}, 4, 2, 1.6, 0.3);
  const Box3D g3 = make_box3d({30, -4, 0.8}, 4, 2, 1.6, -0.3);
  const Box3D g4 = make_box3d({40, 8, 0.8}, 4, 2, 1.6, 1.0);
  const Box3D far_fp = make_box3d({60, -20, 0.8}, 4, 2, 1.6, 0.0);
  std::vector<FrameDetections> frames(3);
  frames[0].gts = {g1, g2};
  frames[1].gts = {g3};
  frames[2].gts = {g4};
  frames[0].preds = {pred(g1, 0.95), pred(far_fp, 0.9), pred(g2, 0.7)};
  frames[1].preds = {pred(g3, 0.8)};
  frames[2].preds = {pred(far_fp, 0.5)};

  // Score order: 0.95 TP, 0.9 FP, 0.8 TP, 0.7 TP, 0.5 FP; 4 GT total.
  // PR points: (r=.25, p=1), (.25, .5), (.5, .667), (.75, .75), (.75, .6).
  // Interpolated precision: r in (0, .25] -> 1.0; (.25, .5] -> 0.75;
  // (.5, .75] -> 0.75; above .75 -> 0.
  double expect = 0.0;
  for (int k = 1; k <= 40; ++k) {
    const double r = k / 40.0;
    if (r <= 0.25)
      expect += 1.0;
    else if (r <= 0.75)
      expect += 0.75;
  }
  expect *= 100.0 / 40.0;
  CHECK(ap40(frames, kIou3d, 0.7) == Catch::Approx(expect).margin(1e-9));
}

TEST_CASE("closed gap reproduces reported aggregates", "[evaluation]") {
  CHECK(closed_gap(86.96, 60.32, 90.85) == Catch::Approx(87.26).margin(0.02));
  CHECK(closed_gap(64.75, 21.66, 83.00) == Catch::Approx(70.25).margin(0.02));
  CHECK(closed_gap(90.85, 60.32, 90.85) == Catch::Approx(100.0));
  CHECK_THROWS_AS(closed_gap(50.0, 42.0, 42.0), DivisionByZeroError);
}

TEST_CASE("ap40 is invariant under monotone score transforms", "[evaluation][prop]") {
  Rng rng(431);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FrameDetections> frames(4);
    for (FrameDetections& f : frames) {
      const std::size_t ng = 1 + rng.uniform_index(6);
      for (std::size_t g = 0; g < ng; ++g) {
        const Box3D b = oracles::random_box(rng, 12.0);
        f.gts.push_back(b);
        if (rng.uniform() < 0.8) {
          Box3D p = b;
          p.center.x += rng.uniform(-0.5, 0.5);
          f.preds.push_back(pred(p, rng.uniform(0.001, 0.999)));
        }
      }
      if (rng.uniform() < 0.5)
        f.preds.push_back(pred(oracles::random_box(rng, 12.0), rng.uniform(0.001, 0.999)));
    }
    const double base = ap40(frames, kIou3d, 0.5);
    std::vector<FrameDetections> transformed = frames;
    for (FrameDetections& f : transformed)
      for (PseudoLabel& l : f.preds) l.score = 0.1 + 5.0 * std::atan(l.score);
    CHECK(ap40(transformed, kIou3d, 0.5) == Catch::Approx(base).margin(1e-12));
  }
}

TEST_CASE("appending a worst-rank miss never raises ap40", "[evaluation][prop]") {
  Rng rng(433);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FrameDetections> frames(3);
    for (FrameDetections& f : frames) {
      const std::size_t ng = 1 + rng.uniform_index(4);
      for (std::size_t g = 0; g < ng; ++g) {
        const Box3D b = oracles::random_box(rng, 10.0);
        f.gts.push_back(b);
        if (rng.uniform() < 0.7) f.preds.push_back(pred(b, rng.uniform(0.2, 1.0)));
      }
    }
    const double base = ap40(frames, kIou3d, 0.7);
    std::vector<FrameDetections> with_fp = frames;
    with_fp[0].preds.push_back(
        pred(make_box3d({500, 500, 0.8}, 4, 2, 1.6, 0.0), 0.001));
    CHECK(ap40(with_fp, kIou3d, 0.7) <= base + 1e-12);

    // Removing a matched prediction never raises recall.
    const MatchCounts before = [&] {
      MatchCounts total;
      for (const FrameDetections& f : frames) {
        const auto a = match_detections(f.preds, f.gts, kIou3d, 0.7);
        total.tp += a.counts.tp;
        total.fp += a.counts.fp;
        total.fn += a.counts.fn;
      }
      return total;
    }();
    std::vector<FrameDetections> dropped = frames;
    for (FrameDetections& f : dropped)
      if (!f.preds.empty()) {
        f.preds.pop_back();
        break;
      }
    MatchCounts after;
    for (const FrameDetections& f : dropped) {
      const auto a = match_detections(f.preds, f.gts, kIou3d, 0.7);
      after.tp += a.counts.tp;
      after.fp += a.counts.fp;
      after.fn += a.counts.fn;
    }
    CHECK(precision_recall(after).second <= precision_recall(before).second + 1e-12);
  }
}

TEST_CASE("ignored ground truth absorbs matching predictions", "[evaluation]") {
  const Box3D active = make_box3d({10, 0, 0.8}, 4, 2, 1.6, 0.0);
  const Box3D ignored = make_box3d({30, 5, 0.8}, 4, 2, 1.6, 0.0);
  FrameDetections f;
  f.gts = {active};
  f.ignored_gts = {ignored};
  f.preds = {pred(active, 0.9), pred(ignored, 0.8)};
  const EvalReport r = evaluate_frames({f}, 0.7);
  CHECK(r.counts.tp == 1);
  CHECK(r.counts.fp == 0);  // the ignored hit is neither TP nor FP
  CHECK(r.counts.fn == 0);
}
