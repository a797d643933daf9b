#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "wlst/errors.hpp"
#include "wlst/geometry.hpp"

namespace wlst {

// 3x4 projection matrix mapping homogeneous camera points to pixels.
struct ProjectionMatrix {
  std::array<std::array<double, 4>, 3> p{
      {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}}};

  // Returns (u*w, v*w, w).
  Vec3 apply_homogeneous(const Vec3& cam) const {
    Vec3 out;
    out.x = p[0][0] * cam.x + p[0][1] * cam.y + p[0][2] * cam.z + p[0][3];
    out.y = p[1][0] * cam.x + p[1][1] * cam.y + p[1][2] * cam.z + p[1][3];
    out.z = p[2][0] * cam.x + p[2][1] * cam.y + p[2][2] * cam.z + p[2][3];
    return out;
  }

  // Rank via Gaussian elimination with partial pivoting.
  int rank(double tol = 1e-9) const {
    std::array<std::array<double, 4>, 3> a = p;
    int rank = 0;
    for (int col = 0; col < 4 && rank < 3; ++col) {
      int pivot = -1;
      double best = tol;
      for (int row = rank; row < 3; ++row) {
        if (std::abs(a[row][col]) > best) {
          best = std::abs(a[row][col]);
          pivot = row;
        }
      }
      if (pivot < 0) continue;
      std::swap(a[rank], a[pivot]);
      for (int row = rank + 1; row < 3; ++row) {
        const double f = a[row][col] / a[rank][col];
        for (int k = col; k < 4; ++k) a[row][k] -= f * a[rank][k];
      }
      ++rank;
    }
    return rank;
  }
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-frame z; negative means behind the camera
};

// LiDAR -> camera rigid transform plus pinhole projection.
struct CameraModel {
  RigidTransform lidar_to_cam;
  ProjectionMatrix projection;
  int image_width = 0;
  int image_height = 0;

  void validate() const {
    if (!lidar_to_cam.is_rigid(1e-6))
      throw Error("CameraModel: lidar_to_cam rotation is not orthonormal");
    if (projection.rank() != 3)
      throw Error("CameraModel: projection matrix is rank-deficient");
    if (image_width <= 0 || image_height <= 0)
      throw Error("CameraModel: invalid image size");
  }

  Vec3 to_camera(const Vec3& lidar) const { return lidar_to_cam.apply(lidar); }

  Vec3 to_lidar(const Vec3& cam) const {
    return lidar_to_cam.inverse().apply(cam);
  }

  Vec3 camera_center_in_lidar() const { return to_lidar(Vec3{}); }

  PixelPoint project(const Vec3& lidar) const {
    const Vec3 cam = to_camera(lidar);
    const Vec3 h = projection.apply_homogeneous(cam);
    return {h.x / h.z, h.y / h.z, cam.z};
  }

  // Unit direction, in LiDAR axes, of the camera ray through pixel (u, v).
  // Uses the left 3x3 of the projection as the calibration matrix.
  Vec3 pixel_ray_in_lidar(double u, double v) const {
    const auto& p = projection.p;
    // Solve K d = (u, v, 1) for d with K upper-triangular-ish via the
    // standard pinhole entries (fx, fy, cx, cy, skew).
    const double fx = p[0][0];
    const double fy = p[1][1];
    const double cx = p[0][2];
    const double cy = p[1][2];
    const double skew = p[0][1];
    Vec3 dir_cam;
    dir_cam.z = 1.0;
    dir_cam.y = (v - cy) / fy;
    dir_cam.x = (u - cx - skew * dir_cam.y) / fx;
    const Vec3 dir_lidar = lidar_to_cam.rotation.transpose() * dir_cam;
    return normalized(dir_lidar);
  }
};

// Project LiDAR points to pixels; no clipping, negative depth is reported.
inline std::vector<PixelPoint> project_to_image(const std::vector<Vec3>& pts,
                                                const CameraModel& cam) {
  std::vector<PixelPoint> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(cam.project(p));
  return out;
}

}  // namespace wlst
