#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/oracles.hpp"
#include "wlst/evaluation.hpp"
#include "wlst/simulate.hpp"

using namespace wlst;

namespace {

bool frames_identical(const FrameRecord& a, const FrameRecord& b) {
  if (a.cloud.size() != b.cloud.size() || a.weak.size() != b.weak.size())
    return false;
  for (std::size_t i = 0; i < a.cloud.size(); ++i) {
    if (a.cloud.points[i].x != b.cloud.points[i].x ||
        a.cloud.points[i].y != b.cloud.points[i].y ||
        a.cloud.points[i].z != b.cloud.points[i].z ||
        a.cloud.intensity[i] != b.cloud.intensity[i])
      return false;
  }
  for (std::size_t i = 0; i < a.weak.size(); ++i)
    if (a.weak[i].x_min != b.weak[i].x_min || a.weak[i].y_max != b.weak[i].y_max)
      return false;
  if (a.gt3d->size() != b.gt3d->size()) return false;
  for (std::size_t i = 0; i < a.gt3d->size(); ++i)
    if ((*a.gt3d)[i].yaw != (*b.gt3d)[i].yaw) return false;
  return true;
}

}  // namespace

TEST_CASE("empty scenes hold only ground points", "[simulate]") {
  SceneSpec spec;
  spec.num_objects = 0;
  spec.seed = 1;
  const FrameRecord frame = generate_scene(spec, 0);
  CHECK(frame.weak.empty());
  CHECK(frame.gt3d->empty());
  CHECK(frame.cloud.size() > 1000);
  for (const Vec3& p : frame.cloud.points) CHECK(p.z == 0.0);
}

TEST_CASE("weak boxes contain the projected ground-truth centers", "[simulate]") {
  SceneSpec spec;
  spec.seed = 2;
  for (int f = 0; f < 10; ++f) {
    const FrameRecord frame = generate_scene(spec, f);
    REQUIRE(frame.weak.size() == frame.weak_gt_index.size());
    for (std::size_t w = 0; w < frame.weak.size(); ++w) {
      const Box3D& gt = (*frame.gt3d)[frame.weak_gt_index[w]];
      const PixelPoint px = frame.cam.project(gt.center);
      CHECK(px.depth > 0.0);
      CHECK(frame.weak[w].contains(px.u, px.v));
    }
  }
}

TEST_CASE("scene generation is deterministic in (seed, frame)", "[simulate]") {
  SceneSpec spec;
  spec.seed = 3;
  const FrameRecord a = generate_scene(spec, 12);
  const FrameRecord b = generate_scene(spec, 12);
  CHECK(frames_identical(a, b));
  const FrameRecord c = generate_scene(spec, 13);
  CHECK_FALSE(frames_identical(a, c));
}

TEST_CASE("ground-truth footprints never overlap", "[simulate][prop]") {
  SceneSpec spec;
  spec.seed = 4;
  for (int f = 0; f < 10; ++f) {
    const FrameRecord frame = generate_scene(spec, f);
    const auto& gts = *frame.gt3d;
    for (std::size_t i = 0; i < gts.size(); ++i)
      for (std::size_t j = i + 1; j < gts.size(); ++j)
        CHECK(iou_bev(gts[i], gts[j]) == 0.0);
  }
}

TEST_CASE("identity profile reproduces ground truth", "[simulate]") {
  SceneSpec spec;
  spec.seed = 5;
  spec.occlusion_probability = 0.0;
  const FrameRecord frame = generate_scene(spec, 0);
  LabelerProfile profile;  // no bias, no noise, no fn/fp
  const PseudoLabelSet out = simulate_labeler(frame, profile, 77);
  REQUIRE(out.size() == frame.gt3d->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(iou_3d(out.labels[i].box, (*frame.gt3d)[i]) == Catch::Approx(1.0));
    CHECK(out.labels[i].score == Catch::Approx(1.0));
  }
}

TEST_CASE("fn_rate of one leaves only false positives", "[simulate]") {
  SceneSpec spec;
  spec.seed = 6;
  const FrameRecord frame = generate_scene(spec, 0);
  LabelerProfile profile;
  profile.fn_rate = 1.0;
  profile.fp_rate = 1.5;
  PseudoLabelSet out = simulate_labeler(frame, profile, 78);
  for (const PseudoLabel& l : out.labels) {
    bool near_gt = false;
    for (const Box3D& gt : *frame.gt3d)
      if (iou_3d(l.box, gt) > 0.5) near_gt = true;
    CHECK_FALSE(near_gt);
  }
}

TEST_CASE("empirical miss fraction approaches fn_rate", "[simulate][prop]") {
  SceneSpec spec;
  spec.seed = 7;
  spec.num_objects = 6;
  spec.occlusion_probability = 0.0;
  LabelerProfile profile;
  profile.fn_rate = 0.25;
  long objects = 0, emitted = 0;
  for (int f = 0; f < 1000; ++f) {
    const FrameRecord frame = generate_scene(spec, f);
    objects += static_cast<long>(frame.gt3d->size());
    emitted += static_cast<long>(simulate_labeler(frame, profile, 79).size());
  }
  const double miss = 1.0 - static_cast<double>(emitted) / static_cast<double>(objects);
  CHECK(miss == Catch::Approx(0.25).margin(0.02));
}

TEST_CASE("autolabeler role labels only weak-labeled objects", "[simulate]") {
  SceneSpec spec;
  spec.seed = 8;
  spec.occlusion_probability = 0.4;  // force some objects without weak labels
  const FrameRecord frame = generate_scene(spec, 1);
  REQUIRE(frame.weak.size() < frame.gt3d->size());
  LabelerProfile profile = default_autolabeler_profile();
  profile.fn_rate = 0.0;
  profile.fp_rate = 0.0;
  const PseudoLabelSet out = simulate_labeler(frame, profile, 80);
  CHECK(out.size() == frame.weak.size());
  for (const PseudoLabel& l : out.labels) {
    CHECK(l.weak_index >= 0);
    CHECK(l.weak_index < static_cast<int>(frame.weak.size()));
  }
}

TEST_CASE("random object scaling rescales dims exactly", "[simulate]") {
  SceneSpec spec;
  spec.seed = 9;
  const FrameRecord frame = generate_scene(spec, 0);

  const FrameRecord same = apply_ros(frame, 1.0 - 1e-12, 1.0 + 1e-12, 55);
  for (std::size_t i = 0; i < frame.gt3d->size(); ++i)
    CHECK((*same.gt3d)[i].length ==
          Catch::Approx((*frame.gt3d)[i].length).epsilon(1e-9));

  const FrameRecord scaled = apply_ros(frame, 0.8, 1.2, 56);
  REQUIRE(scaled.gt3d->size() == frame.gt3d->size());
  for (std::size_t i = 0; i < frame.gt3d->size(); ++i) {
    const double f = (*scaled.gt3d)[i].length / (*frame.gt3d)[i].length;
    CHECK(f >= 0.8);
    CHECK(f <= 1.2);
    CHECK((*scaled.gt3d)[i].width ==
          Catch::Approx(f * (*frame.gt3d)[i].width).epsilon(1e-9));
    CHECK((*scaled.gt3d)[i].height ==
          Catch::Approx(f * (*frame.gt3d)[i].height).epsilon(1e-9));
  }
  CHECK_THROWS_AS(apply_ros(frame, 0.4, 1.0, 57), std::invalid_argument);
}

TEST_CASE("scaled object points stay inside the scaled box", "[simulate][prop]") {
  SceneSpec spec;
  spec.seed = 10;
  spec.num_objects = 6;
  const FrameRecord frame = generate_scene(spec, 2);
  const FrameRecord scaled = apply_ros(frame, 0.85, 1.15, 58);
  for (std::size_t i = 0; i < scaled.gt3d->size(); ++i) {
    const Box3D& before = (*frame.gt3d)[i];
    const Box3D& after = (*scaled.gt3d)[i];
    // Points that belonged to the object (above its bottom face) must fall
    // inside the rescaled box.
    Box3D probe = after;
    probe.height += 1e-6;
    probe.length += 1e-6;
    probe.width += 1e-6;
    const auto members_before = points_in_box(frame.cloud, before);
    for (const std::size_t p : members_before) {
      if (frame.cloud.points[p].z <= before.bottom_z() + 1e-6) continue;
      const PointCloud single{{scaled.cloud.points[p]}, {0.0f}};
      CHECK(points_in_box(single, probe).size() == 1);
    }
  }

  // Ground points are untouched.
  for (std::size_t p = 0; p < frame.cloud.size(); ++p)
    if (frame.cloud.points[p].z == 0.0)
      CHECK(scaled.cloud.points[p].z == 0.0);
}

TEST_CASE("documented profile pair orders precision and recall", "[simulate][slow]") {
  SceneSpec spec;
  spec.seed = 20250;
  const LabelerProfile det = default_detector_profile();
  const LabelerProfile aut = default_autolabeler_profile();

  MatchCounts det_counts, aut_counts;
  const BoxIouFn vol = [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); };
  for (int f = 0; f < 500; ++f) {
    const FrameRecord frame = generate_scene(spec, f);
    const auto run = [&](const LabelerProfile& p, MatchCounts* total) {
      std::vector<PseudoLabel> preds = simulate_labeler(frame, p, spec.seed).labels;
      std::sort(preds.begin(), preds.end(), canonical_label_less);
      const auto a = match_detections(preds, *frame.gt3d, vol, 0.7);
      total->tp += a.counts.tp;
      total->fp += a.counts.fp;
      total->fn += a.counts.fn;
    };
    run(det, &det_counts);
    run(aut, &aut_counts);
  }
  const auto [det_p, det_r] = precision_recall(det_counts);
  const auto [aut_p, aut_r] = precision_recall(aut_counts);
  INFO("det precision " << det_p << " recall " << det_r);
  INFO("aut precision " << aut_p << " recall " << aut_r);
  CHECK(aut_p > det_p);
  CHECK(det_r > aut_r);
}
