#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "wlst/camera.hpp"
#include "wlst/errors.hpp"
#include "wlst/fusion.hpp"
#include "wlst/geometry.hpp"
#include "wlst/pseudo_label.hpp"
#include "wlst/rng.hpp"

namespace wlst {

struct LabelerConfig {
  double near = 0.5;   // meters, frustum depth range
  double far = 80.0;
  int min_points = 8;  // minimum foreground cluster size
  double plane_tol = 0.2;         // RANSAC ground-plane inlier distance
  int ransac_iters = 200;
  double ground_normal_min_z = 0.85;  // only near-horizontal planes count as ground
  double ground_z_band = 0.5;     // ground must pass near the lowest points
  double cluster_radius = 0.7;    // Euclidean clustering radius
  double angle_step_deg = 1.0;    // stage-1 orientation scan resolution
  double stage2_angle_step_deg = 0.1;  // finer scan for the cascaded re-fit
  double min_dim = 0.5;           // floor on fitted box dimensions
  std::uint64_t seed = 0;         // RANSAC RNG seed
};

// A 2D box back-projected through the camera.
struct Frustum {
  Box2D source_box;
  double near = 0.5;
  double far = 80.0;
};

enum class PointFrame { kCamera, kFrustum, kMask, kBox };

enum class SkipReason { kNone, kEmptyFrustum, kNoForeground, kDegenerateFit };

inline const char* to_string(SkipReason r) {
  switch (r) {
    case SkipReason::kNone: return "none";
    case SkipReason::kEmptyFrustum: return "empty_frustum";
    case SkipReason::kNoForeground: return "no_foreground";
    case SkipReason::kDegenerateFit: return "degenerate_fit";
  }
  return "unknown";
}

// Frustum point set with its active coordinate frame. The camera frame here
// is camera-centered but keeps the LiDAR axes (+X forward, +Z up), so every
// later stage works with a vertical +Z and yaw-only rotations. from_camera
// maps camera-frame coordinates to the active frame and is always rigid.
struct FrustumPoints {
  std::vector<Vec3> points;
  std::vector<int> source_indices;  // into the originating cloud
  PointFrame frame = PointFrame::kCamera;
  RigidTransform from_camera;
  Vec3 center_ray{1, 0, 0};  // unit ray through the 2D box center, active frame
};

// Rotation angle about +Z of a yaw-only rigid transform.
inline double z_rotation_angle(const RigidTransform& t) {
  return std::atan2(t.rotation.m[1][0], t.rotation.m[0][0]);
}

// Move a yaw-only box through a z-rotation + translation.
inline Box3D transform_box(const Box3D& box, const RigidTransform& t) {
  return make_box3d(t.apply(box.center), box.length, box.width, box.height,
                    box.yaw + z_rotation_angle(t), box.category);
}

// Select the points whose image projection falls inside box2d with camera
// depth in [near, far]; output is camera-centered. Callers labeling many
// boxes against one cloud can pass the projections precomputed.
inline FrustumPoints extract_frustum(const PointCloud& cloud, const Box2D& box2d,
                                     const CameraModel& cam,
                                     const LabelerConfig& cfg = {},
                                     const std::vector<PixelPoint>* projections =
                                         nullptr) {
  if (!is_valid(box2d) || box2d.x_min < -kGeomEps || box2d.y_min < -kGeomEps ||
      box2d.x_max > cam.image_width + kGeomEps ||
      box2d.y_max > cam.image_height + kGeomEps)
    throw std::invalid_argument("extract_frustum: box2d outside image bounds");
  if (projections && projections->size() != cloud.points.size())
    throw std::invalid_argument("extract_frustum: projection cache size mismatch");

  const Vec3 cam_center = cam.camera_center_in_lidar();
  FrustumPoints fp;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const PixelPoint px = projections ? (*projections)[i] : cam.project(cloud.points[i]);
    if (px.depth < cfg.near || px.depth > cfg.far) continue;
    if (!box2d.contains(px.u, px.v)) continue;
    fp.points.push_back(cloud.points[i] - cam_center);
    fp.source_indices.push_back(static_cast<int>(i));
  }
  if (fp.points.empty()) throw EmptyFrustumError("extract_frustum: no points in frustum");

  const Vec2 c = box2d.center();
  fp.center_ray = cam.pixel_ray_in_lidar(c.x, c.y);
  fp.frame = PointFrame::kCamera;
  fp.from_camera = RigidTransform::identity();
  return fp;
}

// Rotate about the vertical axis so the box-center ray azimuth maps onto +X.
// Applying it again with the recomputed ray is the identity.
inline FrustumPoints to_frustum_coord(FrustumPoints fp) {
  if (fp.frame != PointFrame::kCamera && fp.frame != PointFrame::kFrustum)
    throw std::invalid_argument("to_frustum_coord: unexpected frame");
  const double azimuth = std::atan2(fp.center_ray.y, fp.center_ray.x);
  const RigidTransform rot = RigidTransform::rotate_z(-azimuth);
  for (Vec3& p : fp.points) p = rot.apply(p);
  fp.center_ray = rot.rotation * fp.center_ray;
  fp.from_camera = fp.from_camera.then(rot);
  fp.frame = PointFrame::kFrustum;
  return fp;
}

namespace detail {

// Connected components over the radius graph via a uniform grid; exact
// single-linkage clustering.
inline std::vector<std::vector<int>> radius_clusters(const std::vector<Vec3>& pts,
                                                     double radius) {
  const double cell = radius;
  const auto key = [cell](const Vec3& p) {
    const auto q = [cell](double v) {
      return static_cast<std::int64_t>(std::floor(v / cell));
    };
    return (q(p.x) * 73856093LL) ^ (q(p.y) * 19349663LL) ^ (q(p.z) * 83492791LL);
  };
  std::unordered_map<std::int64_t, std::vector<int>> grid;
  for (std::size_t i = 0; i < pts.size(); ++i)
    grid[key(pts[i])].push_back(static_cast<int>(i));

  const double r2 = radius * radius;
  std::vector<int> component(pts.size(), -1);
  std::vector<std::vector<int>> clusters;
  std::vector<int> stack;
  for (std::size_t seed = 0; seed < pts.size(); ++seed) {
    if (component[seed] >= 0) continue;
    const int id = static_cast<int>(clusters.size());
    clusters.emplace_back();
    component[seed] = id;
    stack.assign(1, static_cast<int>(seed));
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      clusters[id].push_back(cur);
      const Vec3& p = pts[cur];
      const std::int64_t qx = static_cast<std::int64_t>(std::floor(p.x / cell));
      const std::int64_t qy = static_cast<std::int64_t>(std::floor(p.y / cell));
      const std::int64_t qz = static_cast<std::int64_t>(std::floor(p.z / cell));
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            const std::int64_t k = ((qx + dx) * 73856093LL) ^
                                   ((qy + dy) * 19349663LL) ^
                                   ((qz + dz) * 83492791LL);
            const auto it = grid.find(k);
            if (it == grid.end()) continue;
            for (const int j : it->second) {
              if (component[j] >= 0) continue;
              const Vec3 d = pts[j] - p;
              if (dot(d, d) <= r2) {
                component[j] = id;
                stack.push_back(j);
              }
            }
          }
    }
    std::sort(clusters[id].begin(), clusters[id].end());
  }
  return clusters;
}

}  // namespace detail

struct ForegroundSegmentation {
  std::vector<int> indices;  // into fp.points
  bool has_ground = false;
  Vec3 ground_normal;     // unit normal, active frame
  double ground_offset = 0.0;  // plane: dot(normal, p) + offset == 0
};

// Foreground extraction: drop the RANSAC-fit ground plane (near-horizontal
// consensus plane), then keep the largest Euclidean cluster. Returns indices
// into fp.points plus the plane, which later stages use to complete the box
// bottom that plane removal bites off.
inline ForegroundSegmentation segment_foreground_detail(const FrustumPoints& fp,
                                                        const LabelerConfig& cfg) {
  if (fp.frame != PointFrame::kFrustum)
    throw std::invalid_argument("segment_foreground: points not in frustum frame");
  const std::size_t n = fp.points.size();
  if (n < static_cast<std::size_t>(cfg.min_points))
    throw NoForegroundError("segment_foreground: too few frustum points");

  // RANSAC ground plane: the best consensus plane that is near-horizontal
  // and passes near the lowest points. The height gate keeps a car roof
  // (also horizontal) from being taken for the ground.
  double z_min = fp.points.front().z;
  for (const Vec3& p : fp.points) z_min = std::min(z_min, p.z);
  const double z_ceiling = z_min + cfg.ground_z_band;

  Rng rng(mix_seed(cfg.seed, 0x67726e64ULL));
  std::size_t best_count = 0;
  Vec3 best_normal;
  double best_offset = 0.0;
  for (int it = 0; it < cfg.ransac_iters; ++it) {
    const std::size_t a = rng.uniform_index(n);
    const std::size_t b = rng.uniform_index(n);
    const std::size_t c = rng.uniform_index(n);
    if (a == b || b == c || a == c) continue;
    if (fp.points[a].z > z_ceiling || fp.points[b].z > z_ceiling ||
        fp.points[c].z > z_ceiling)
      continue;
    const Vec3 nrm = cross(fp.points[b] - fp.points[a], fp.points[c] - fp.points[a]);
    const double len = norm(nrm);
    if (len <= kGeomEps) continue;
    const Vec3 unit = nrm * (1.0 / len);
    if (std::abs(unit.z) < cfg.ground_normal_min_z) continue;
    const double offset = -dot(unit, fp.points[a]);
    std::size_t count = 0;
    for (const Vec3& p : fp.points)
      if (std::abs(dot(unit, p) + offset) <= cfg.plane_tol) ++count;
    if (count > best_count) {
      best_count = count;
      best_normal = unit;
      best_offset = offset;
    }
  }

  // Least-squares polish: a minimal triple from a long thin ground strip is
  // ill-conditioned across the strip, and a slightly tilted plane both bites
  // into the object and leaves ground remnants. Refit z = a x + b y + c on
  // the inliers (valid for near-horizontal planes) and re-collect.
  for (int pass = 0; pass < 2 && best_count >= 3; ++pass) {
    double sx = 0, sy = 0, sz = 0, sxx = 0, sxy = 0, syy = 0, sxz = 0, syz = 0;
    std::size_t m = 0;
    for (const Vec3& p : fp.points) {
      if (std::abs(dot(best_normal, p) + best_offset) > cfg.plane_tol) continue;
      sx += p.x; sy += p.y; sz += p.z;
      sxx += p.x * p.x; sxy += p.x * p.y; syy += p.y * p.y;
      sxz += p.x * p.z; syz += p.y * p.z;
      ++m;
    }
    if (m < 3) break;
    const double n_d = static_cast<double>(m);
    const double cxx = sxx - sx * sx / n_d;
    const double cxy = sxy - sx * sy / n_d;
    const double cyy = syy - sy * sy / n_d;
    const double cxz = sxz - sx * sz / n_d;
    const double cyz = syz - sy * sz / n_d;
    const double det = cxx * cyy - cxy * cxy;
    double a = 0.0, b = 0.0;
    if (std::abs(det) > kGeomEps) {
      a = (cxz * cyy - cyz * cxy) / det;
      b = (cyz * cxx - cxz * cxy) / det;
    }
    const double c = (sz - a * sx - b * sy) / n_d;
    const Vec3 unit = normalized(Vec3{-a, -b, 1.0});
    if (std::abs(unit.z) < cfg.ground_normal_min_z) break;
    best_normal = unit;
    best_offset = -unit.z * c;
    best_count = m;
  }

  std::vector<int> candidates;
  candidates.reserve(n);
  if (best_count >= 3) {
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(dot(best_normal, fp.points[i]) + best_offset) > cfg.plane_tol)
        candidates.push_back(static_cast<int>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) candidates.push_back(static_cast<int>(i));
  }
  if (candidates.empty())
    throw NoForegroundError("segment_foreground: all points on the ground plane");

  std::vector<Vec3> cand_pts;
  cand_pts.reserve(candidates.size());
  for (const int i : candidates) cand_pts.push_back(fp.points[i]);
  const auto clusters = detail::radius_clusters(cand_pts, cfg.cluster_radius);

  // Largest cluster; ties resolved toward the earliest point index.
  const std::vector<int>* best = nullptr;
  for (const auto& c : clusters) {
    if (!best || c.size() > best->size() ||
        (c.size() == best->size() && c.front() < best->front()))
      best = &c;
  }
  if (!best || best->size() < static_cast<std::size_t>(cfg.min_points))
    throw NoForegroundError("segment_foreground: largest cluster below min_points");

  ForegroundSegmentation out;
  out.indices.reserve(best->size());
  for (const int i : *best) out.indices.push_back(candidates[i]);
  std::sort(out.indices.begin(), out.indices.end());
  if (best_count >= 3) {
    out.has_ground = true;
    out.ground_normal = best_normal;
    out.ground_offset = best_offset;
  }
  return out;
}

inline std::vector<int> segment_foreground(const FrustumPoints& fp,
                                           const LabelerConfig& cfg) {
  return segment_foreground_detail(fp, cfg).indices;
}

// Translate the foreground subset so its centroid is the origin.
inline FrustumPoints to_mask_coord(const FrustumPoints& fp,
                                   const std::vector<int>& foreground) {
  if (fp.frame != PointFrame::kFrustum)
    throw std::invalid_argument("to_mask_coord: points not in frustum frame");
  if (foreground.empty())
    throw std::invalid_argument("to_mask_coord: empty foreground");

  Vec3 centroid{};
  for (const int i : foreground) centroid = centroid + fp.points[i];
  centroid = centroid * (1.0 / static_cast<double>(foreground.size()));

  FrustumPoints out;
  out.points.reserve(foreground.size());
  out.source_indices.reserve(foreground.size());
  for (const int i : foreground) {
    out.points.push_back(fp.points[i] - centroid);
    out.source_indices.push_back(fp.source_indices[i]);
  }
  out.frame = PointFrame::kMask;
  out.from_camera = fp.from_camera.then(RigidTransform::translate(centroid * -1.0));
  out.center_ray = fp.center_ray;
  return out;
}

struct BevFit {
  Box3D box;
  double fit_score = 0.0;  // fraction of input points inside the box
};

// Minimum-area enclosing rectangle by orientation scan over [0, pi).
// l >= w by construction; yaw points away from sensor_pos; h and center z
// come from the point z extent.
inline BevFit fit_box_bev(const std::vector<Vec3>& pts, const LabelerConfig& cfg,
                          double angle_step_deg, const Vec3& sensor_pos = {}) {
  if (pts.size() < static_cast<std::size_t>(std::max(cfg.min_points, 3)))
    throw DegenerateFitError("fit_box_bev: too few points");

  const double step = angle_step_deg * kPi / 180.0;
  double best_area = -1.0;
  double best_theta = 0.0, best_minx = 0, best_maxx = 0, best_miny = 0, best_maxy = 0;
  for (double theta = 0.0; theta < kPi - 0.5 * step; theta += step) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    double minx = 0, maxx = 0, miny = 0, maxy = 0;
    bool first = true;
    for (const Vec3& p : pts) {
      const double x = c * p.x + s * p.y;   // rotate by -theta
      const double y = -s * p.x + c * p.y;
      if (first) {
        minx = maxx = x;
        miny = maxy = y;
        first = false;
      } else {
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
    }
    const double area = (maxx - minx) * (maxy - miny);
    if (best_area < 0.0 || area < best_area) {
      best_area = area;
      best_theta = theta;
      best_minx = minx;
      best_maxx = maxx;
      best_miny = miny;
      best_maxy = maxy;
    }
  }

  double extent_x = best_maxx - best_minx;
  double extent_y = best_maxy - best_miny;
  if (std::max(extent_x, extent_y) < cfg.min_dim)
    throw DegenerateFitError("fit_box_bev: points span below min_dim in every direction");

  double theta = best_theta;
  if (extent_x < extent_y) {  // canonicalize: length along the box +X axis
    std::swap(extent_x, extent_y);
    const double mx = 0.5 * (best_minx + best_maxx);
    const double my = 0.5 * (best_miny + best_maxy);
    best_minx = my - 0.5 * extent_x;
    best_maxx = my + 0.5 * extent_x;
    best_miny = -(mx + 0.5 * extent_y);
    best_maxy = -(mx - 0.5 * extent_y);
    theta += 0.5 * kPi;
  }

  const double length = std::max(extent_x, cfg.min_dim);
  const double width = std::max(extent_y, cfg.min_dim);

  const double mx = 0.5 * (best_minx + best_maxx);
  const double my = 0.5 * (best_miny + best_maxy);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Vec3 center{c * mx - s * my, s * mx + c * my, 0.0};

  double zmin = pts.front().z, zmax = pts.front().z;
  for (const Vec3& p : pts) {
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  center.z = 0.5 * (zmin + zmax);
  const double height = std::max(zmax - zmin, cfg.min_dim);

  // Disambiguate the front/back ambiguity toward the sensor-away direction.
  double yaw = normalize_angle(theta);
  const Vec2 away = (center - sensor_pos).xy();
  if (std::cos(yaw) * away.x + std::sin(yaw) * away.y < 0.0)
    yaw = normalize_angle(yaw + kPi);

  BevFit fit;
  fit.box = make_box3d(center, length, width, height, yaw);
  PointCloud pc;
  pc.points = pts;
  fit.fit_score = static_cast<double>(points_in_box(pc, fit.box).size()) /
                  static_cast<double>(pts.size());
  return fit;
}

struct AutolabelResult {
  std::optional<PseudoLabel> label;
  SkipReason skip = SkipReason::kNone;
  Box3D stage1_box;  // LiDAR frame, only meaningful when label is set
  Box3D stage2_box;
};

namespace detail {

// Plane removal bites off the lowest band of an object, so a fitted box
// floats by up to plane_tol. When the box bottom sits just above the
// detected ground plane, extend it down onto the plane.
inline Box3D snap_bottom_to_ground(const Box3D& box, const Vec3& normal,
                                   double offset, double max_gap) {
  if (std::abs(normal.z) < 0.5) return box;
  const double ground_z =
      -(offset + normal.x * box.center.x + normal.y * box.center.y) / normal.z;
  const double bottom = box.bottom_z();
  const double gap = bottom - ground_z;
  if (gap <= 0.0 || gap > max_gap) return box;
  const double top = box.top_z();
  return make_box3d({box.center.x, box.center.y, 0.5 * (ground_z + top)},
                    box.length, box.width, top - ground_z, box.yaw,
                    box.category);
}

}  // namespace detail

// Full weak-to-strong pipeline: frustum extraction, frustum and mask
// coordinate transforms, foreground segmentation, a coarse BEV fit and a
// cascaded fine re-fit in the stage-1 box frame. The confidence score is the
// 2D IoU between the re-projected fitted box and the source 2D box.
inline AutolabelResult autolabel(const PointCloud& cloud, const Box2D& box2d,
                                 const CameraModel& cam, const LabelerConfig& cfg,
                                 const std::vector<PixelPoint>* projections = nullptr) {
  AutolabelResult result;
  try {
    FrustumPoints fp =
        to_frustum_coord(extract_frustum(cloud, box2d, cam, cfg, projections));
    const ForegroundSegmentation seg = segment_foreground_detail(fp, cfg);
    const FrustumPoints mp = to_mask_coord(fp, seg.indices);
    const Vec3 sensor_in_mask = mp.from_camera.apply(Vec3{});

    const BevFit stage1 = fit_box_bev(mp.points, cfg, cfg.angle_step_deg, sensor_in_mask);

    // Stage-1 box frame: center at the origin, yaw zeroed.
    const RigidTransform to_box =
        RigidTransform::translate(stage1.box.center * -1.0)
            .then(RigidTransform::rotate_z(-stage1.box.yaw));
    std::vector<Vec3> box_pts;
    box_pts.reserve(mp.points.size());
    for (const Vec3& p : mp.points) box_pts.push_back(to_box.apply(p));
    const BevFit stage2 =
        fit_box_bev(box_pts, cfg, cfg.stage2_angle_step_deg, to_box.apply(sensor_in_mask));

    // Complete the ground-clipped bottom in the mask frame, where the plane
    // is known (its offset shifts by the centroid translation).
    Box3D stage1_mask = stage1.box;
    Box3D stage2_mask = transform_box(stage2.box, to_box.inverse());
    if (seg.has_ground) {
      Vec3 centroid{};
      for (const int i : seg.indices) centroid = centroid + fp.points[i];
      centroid = centroid * (1.0 / static_cast<double>(seg.indices.size()));
      const double mask_offset = seg.ground_offset + dot(seg.ground_normal, centroid);
      const double max_gap = cfg.plane_tol + 0.15;
      stage1_mask = detail::snap_bottom_to_ground(stage1_mask, seg.ground_normal,
                                                  mask_offset, max_gap);
      stage2_mask = detail::snap_bottom_to_ground(stage2_mask, seg.ground_normal,
                                                  mask_offset, max_gap);
    }

    // Compose back to the LiDAR frame.
    const RigidTransform mask_to_lidar =
        mp.from_camera.inverse().then(
            RigidTransform::translate(cam.camera_center_in_lidar()));

    result.stage1_box = transform_box(stage1_mask, mask_to_lidar);
    result.stage2_box = transform_box(stage2_mask, mask_to_lidar);

    PseudoLabel label;
    label.box = result.stage2_box;
    label.source = LabelSource::kAutolabeler;
    const std::optional<ConvexPolygon2D> hull = reprojected_hull(label.box, cam);
    label.score = hull ? polygon_rect_iou(*hull, box2d) : 0.0;
    label.prob = 0.0;  // filled by the fusion stage
    result.label = label;
  } catch (const EmptyFrustumError&) {
    result.skip = SkipReason::kEmptyFrustum;
  } catch (const NoForegroundError&) {
    result.skip = SkipReason::kNoForeground;
  } catch (const DegenerateFitError&) {
    result.skip = SkipReason::kDegenerateFit;
  }
  return result;
}

}  // namespace wlst
