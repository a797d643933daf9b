#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "wlst/camera.hpp"
#include "wlst/frame.hpp"
#include "wlst/fusion.hpp"
#include "wlst/geometry.hpp"
#include "wlst/pseudo_label.hpp"
#include "wlst/rng.hpp"

namespace wlst {

// KITTI-like forward camera: optical axis along LiDAR +X, mounted above the
// ground-plane origin.
inline CameraModel default_camera() {
  CameraModel cam;
  cam.image_width = 1242;
  cam.image_height = 375;
  const double f = 721.5377;
  const double cu = 609.5593;
  const double cv = 172.854;
  cam.projection.p = {{{f, 0, cu, 0}, {0, f, cv, 0}, {0, 0, 1, 0}}};
  // Camera axes: x right (-Y lidar), y down (-Z lidar), z forward (+X lidar).
  Mat3 r;
  r.m = {{{0, -1, 0}, {0, 0, -1}, {1, 0, 0}}};
  const Vec3 center{0.0, 0.0, 1.65};
  cam.lidar_to_cam = {r, (r * center) * -1.0};
  return cam;
}

// Scene generator parameters. Objects are cars sitting on the z = 0 ground
// plane inside the camera field of view; the sensor sits above the origin.
struct SceneSpec {
  int num_objects = 12;
  Vec3 size_mean{4.2, 1.8, 1.6};   // (l, w, h)
  Vec3 size_std{0.35, 0.12, 0.10};
  double placement_min_range = 8.0;   // meters, forward
  double placement_extent = 40.0;     // meters, forward
  double points_per_m2_at_10m = 60.0;
  double density_falloff = 1.6;       // density ~ (10 / distance)^falloff
  double ground_extent = 50.0;        // ground patch: x in [0, e], y in [-e/2, e/2]
  double ground_density = 6.0;        // points per square meter
  double occlusion_probability = 0.05;
  double sensor_height = 1.73;
  std::uint64_t seed = 0;
  CameraModel camera = default_camera();
};

enum class LabelerRole { kDetector, kAutolabeler };

// Parametric error model standing in for a pre-trained labeler. size_bias is
// multiplicative per axis, center_bias additive; noises are Gaussian. The
// confidence score is clamp(iou_with_gt + N(0, score_noise)).
struct LabelerProfile {
  Vec3 size_bias{1.0, 1.0, 1.0};
  Vec3 center_bias{0.0, 0.0, 0.0};
  double yaw_noise_std = 0.0;
  double center_noise_std = 0.0;
  double fp_rate = 0.0;      // expected false positives per frame (Poisson)
  double fn_rate = 0.0;      // per-object miss probability
  double score_noise = 0.0;
  double fp_score_min = 0.3;
  double fp_score_max = 0.7;
  LabelerRole role = LabelerRole::kDetector;
};

inline LabelerProfile default_detector_profile() {
  LabelerProfile p;
  p.size_bias = {1.10, 1.10, 1.10};
  p.yaw_noise_std = 0.02;
  p.center_noise_std = 0.10;
  p.fp_rate = 2.0;
  p.fn_rate = 0.10;
  p.score_noise = 0.10;
  p.role = LabelerRole::kDetector;
  return p;
}

inline LabelerProfile default_autolabeler_profile() {
  LabelerProfile p;
  p.size_bias = {1.10, 1.10, 1.10};
  p.yaw_noise_std = 0.02;
  p.center_noise_std = 0.10;
  p.fp_rate = 0.3;
  p.fn_rate = 0.20;
  p.score_noise = 0.10;
  p.role = LabelerRole::kAutolabeler;
  return p;
}

inline std::string frame_name(int frame_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", frame_index);
  return buf;
}

namespace detail {

// Weak label: axis-aligned bound of the projected ground-truth corners.
// Emitted only when all corners are in front of the camera and the box fits
// inside the image.
inline bool weak_box_for(const Box3D& gt, const CameraModel& cam, Box2D* out) {
  const auto corners = corners_3d(gt);
  double umin = 0, umax = 0, vmin = 0, vmax = 0;
  bool first = true;
  for (const Vec3& c : corners) {
    const PixelPoint px = cam.project(c);
    if (px.depth <= kGeomEps) return false;
    if (first) {
      umin = umax = px.u;
      vmin = vmax = px.v;
      first = false;
    } else {
      umin = std::min(umin, px.u);
      umax = std::max(umax, px.u);
      vmin = std::min(vmin, px.v);
      vmax = std::max(vmax, px.v);
    }
  }
  if (umin < 0.0 || vmin < 0.0 || umax > cam.image_width || vmax > cam.image_height)
    return false;
  *out = {umin, vmin, umax, vmax};
  return true;
}

// Uniform samples over the four side faces and the top face (the sensor
// never sees the bottom). Counts scale with face area and distance-decayed
// density.
inline void sample_box_surface(const Box3D& box, double density, Rng& rng,
                               std::vector<Vec3>* points) {
  struct Face {
    double area;
    int kind;  // 0:+x 1:-x 2:+y 3:-y 4:top
  };
  const double l = box.length, w = box.width, h = box.height;
  const Face faces[5] = {{w * h, 0}, {w * h, 1}, {l * h, 2}, {l * h, 3}, {l * w, 4}};
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  for (const Face& f : faces) {
    const int count = std::max(1, static_cast<int>(std::lround(f.area * density)));
    for (int i = 0; i < count; ++i) {
      const double a = rng.uniform() - 0.5;
      const double b = rng.uniform() - 0.5;
      Vec3 local;
      switch (f.kind) {
        case 0: local = {0.5 * l, a * w, b * h}; break;
        case 1: local = {-0.5 * l, a * w, b * h}; break;
        case 2: local = {a * l, 0.5 * w, b * h}; break;
        case 3: local = {a * l, -0.5 * w, b * h}; break;
        default: local = {a * l, b * w, 0.5 * h}; break;
      }
      points->push_back({c * local.x - s * local.y + box.center.x,
                         s * local.x + c * local.y + box.center.y,
                         local.z + box.center.z});
    }
  }
}

}  // namespace detail

// Deterministic synthetic frame: ground plane samples plus surface-sampled
// cars, weak 2D labels from re-projected ground truth. All randomness flows
// from (spec.seed, frame_index).
inline FrameRecord generate_scene(const SceneSpec& spec, int frame_index) {
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(frame_index)));
  FrameRecord frame;
  frame.frame_id = frame_name(frame_index);
  frame.cam = spec.camera;

  // Ground-truth boxes, rejection-sampled so footprints never overlap.
  std::vector<Box3D> gts;
  for (int i = 0; i < spec.num_objects; ++i) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const auto dim = [&](double mean, double std) {
        return std::max(0.5, mean + std * rng.normal());
      };
      const double l = dim(spec.size_mean.x, spec.size_std.x);
      const double w = dim(spec.size_mean.y, spec.size_std.y);
      const double h = dim(spec.size_mean.z, spec.size_std.z);
      const double x = rng.uniform(spec.placement_min_range, spec.placement_extent);
      const double y = rng.uniform(-0.45, 0.45) * x;
      const double yaw = rng.uniform(-kPi, kPi);
      const Box3D box = make_box3d({x, y, 0.5 * h}, l, w, h, yaw);
      bool overlaps = false;
      for (const Box3D& other : gts)
        if (iou_bev(box, other) > 0.0) {
          overlaps = true;
          break;
        }
      if (!overlaps) {
        gts.push_back(box);
        break;
      }
    }
  }

  std::vector<bool> occluded(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i)
    occluded[i] = rng.uniform() < spec.occlusion_probability;

  // Ground points.
  const double gx = spec.ground_extent;
  const int ground_count =
      static_cast<int>(std::lround(gx * gx * spec.ground_density));
  frame.cloud.points.reserve(ground_count);
  for (int i = 0; i < ground_count; ++i) {
    frame.cloud.points.push_back(
        {rng.uniform(0.0, gx), rng.uniform(-0.5 * gx, 0.5 * gx), 0.0});
    frame.cloud.intensity.push_back(static_cast<float>(rng.uniform(0.1, 0.5)));
  }

  // Object surface points with distance-decayed density.
  const Vec3 sensor{0.0, 0.0, spec.sensor_height};
  std::vector<int> surface_count(gts.size(), 0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (occluded[i]) continue;
    const double d = std::max(1.0, norm(gts[i].center - sensor));
    const double density =
        spec.points_per_m2_at_10m * std::pow(10.0 / d, spec.density_falloff);
    std::vector<Vec3> pts;
    detail::sample_box_surface(gts[i], density, rng, &pts);
    surface_count[i] = static_cast<int>(pts.size());
    for (const Vec3& p : pts) {
      frame.cloud.points.push_back(p);
      frame.cloud.intensity.push_back(static_cast<float>(rng.uniform(0.3, 0.9)));
    }
  }

  // Weak 2D labels for visible objects whose projection stays in the image.
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (occluded[i] || surface_count[i] == 0) continue;
    Box2D weak;
    if (detail::weak_box_for(gts[i], frame.cam, &weak)) {
      frame.weak.push_back(weak);
      frame.weak_gt_index.push_back(static_cast<int>(i));
    }
  }

  frame.gt3d = std::move(gts);
  return frame;
}

// Simulated labeler: perturbs each surviving ground-truth box per the
// profile and appends Poisson false positives placed uniformly in the
// detection range. The autolabeler role only sees weak-labeled objects and
// records the weak-box correspondence.
inline PseudoLabelSet simulate_labeler(const FrameRecord& frame,
                                       const LabelerProfile& profile,
                                       std::uint64_t seed,
                                       double noise_mult = 1.0) {
  Rng rng(mix_seed(mix_seed(seed, hash_id(frame.frame_id)),
                   profile.role == LabelerRole::kDetector ? 0xdecULL : 0xa07ULL));
  PseudoLabelSet out;
  out.frame_id = frame.frame_id;
  if (!frame.gt3d) return out;

  std::vector<int> gt_weak(frame.gt3d->size(), -1);
  for (std::size_t w = 0; w < frame.weak_gt_index.size(); ++w) {
    const int g = frame.weak_gt_index[w];
    if (g >= 0 && g < static_cast<int>(gt_weak.size()))
      gt_weak[g] = static_cast<int>(w);
  }

  for (std::size_t i = 0; i < frame.gt3d->size(); ++i) {
    const Box3D& gt = (*frame.gt3d)[i];
    const int weak_index = gt_weak[i];
    if (profile.role == LabelerRole::kAutolabeler && weak_index < 0) continue;
    if (rng.uniform() < profile.fn_rate) {
      // Missed object still consumes its perturbation draws so the stream
      // stays aligned across profile updates.
      for (int d = 0; d < 5; ++d) rng.normal();
      continue;
    }
    Box3D box = gt;
    box.length *= profile.size_bias.x;
    box.width *= profile.size_bias.y;
    box.height *= profile.size_bias.z;
    box.center = box.center + profile.center_bias;
    box.center.x += rng.normal(0.0, profile.center_noise_std * noise_mult);
    box.center.y += rng.normal(0.0, profile.center_noise_std * noise_mult);
    box.center.z += rng.normal(0.0, profile.center_noise_std * noise_mult);
    box.yaw = normalize_angle(box.yaw + rng.normal(0.0, profile.yaw_noise_std * noise_mult));
    const double score =
        std::clamp(iou_3d(box, gt) + rng.normal(0.0, profile.score_noise * noise_mult),
                   0.0, 1.0);
    PseudoLabel label;
    label.box = box;
    label.score = score;
    label.source = profile.role == LabelerRole::kDetector
                       ? LabelSource::kDetector
                       : LabelSource::kAutolabeler;
    label.weak_index = profile.role == LabelerRole::kAutolabeler ? weak_index : -1;
    out.labels.push_back(label);
  }

  const int fp_count = rng.poisson(profile.fp_rate);
  for (int f = 0; f < fp_count; ++f) {
    const double l = rng.uniform(3.2, 4.8);
    const double w = rng.uniform(1.5, 1.9);
    const double h = rng.uniform(1.4, 1.8);
    const double x = rng.uniform(-kRangeXY, kRangeXY);
    const double y = rng.uniform(-kRangeXY, kRangeXY);
    const double yaw = rng.uniform(-kPi, kPi);
    PseudoLabel label;
    label.box = make_box3d({x, y, 0.5 * h}, l, w, h, yaw);
    label.score = rng.uniform(profile.fp_score_min, profile.fp_score_max);
    label.source = profile.role == LabelerRole::kDetector
                       ? LabelSource::kDetector
                       : LabelSource::kAutolabeler;
    out.labels.push_back(label);
  }
  return out;
}

// Random object scaling: rescale every ground-truth box and its member
// points about the box center by an independent uniform factor. Ground
// points are untouched; weak labels are regenerated from the scaled boxes.
inline FrameRecord apply_ros(const FrameRecord& frame, double scale_low,
                             double scale_high, std::uint64_t seed) {
  if (!(scale_low > 0.5 && scale_high < 2.0 && scale_low <= scale_high))
    throw std::invalid_argument("apply_ros: scale range must lie inside (0.5, 2.0)");
  FrameRecord out = frame;
  if (!out.gt3d) return out;

  Rng rng(mix_seed(seed, hash_id(frame.frame_id)));
  std::vector<std::vector<std::size_t>> members(out.gt3d->size());
  for (std::size_t i = 0; i < out.gt3d->size(); ++i) {
    const Box3D& box = (*out.gt3d)[i];
    // Membership excludes the bottom face so ground points never rescale.
    for (const std::size_t p : points_in_box(out.cloud, box))
      if (out.cloud.points[p].z > box.bottom_z() + 1e-6) members[i].push_back(p);
  }

  for (std::size_t i = 0; i < out.gt3d->size(); ++i) {
    const double f = rng.uniform(scale_low, scale_high);
    Box3D& box = (*out.gt3d)[i];
    for (const std::size_t p : members[i])
      out.cloud.points[p] = box.center + (out.cloud.points[p] - box.center) * f;
    box.length *= f;
    box.width *= f;
    box.height *= f;
  }

  out.weak.clear();
  out.weak_gt_index.clear();
  for (std::size_t i = 0; i < out.gt3d->size(); ++i) {
    if (members[i].empty()) continue;
    Box2D weak;
    if (detail::weak_box_for((*out.gt3d)[i], out.cam, &weak)) {
      out.weak.push_back(weak);
      out.weak_gt_index.push_back(static_cast<int>(i));
    }
  }
  return out;
}

}  // namespace wlst
