#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "wlst/errors.hpp"

namespace wlst {

inline constexpr double kPi = std::numbers::pi;

// The one geometric tolerance. Boundary checks, identity comparisons and
// degeneracy cutoffs all use this constant; nothing else hard-codes an
// epsilon.
inline constexpr double kGeomEps = 1e-9;

// Detection range, meters: clouds are filtered to it and simulated false
// positives are placed inside it.
inline constexpr double kRangeXY = 75.2;
inline constexpr double kRangeZMin = -2.0;
inline constexpr double kRangeZMax = 4.0;

// Map an angle to (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a > kPi) a -= 2.0 * kPi;
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
};

inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec2 xy() const { return {x, y}; }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline double norm(const Vec2& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return n > 0.0 ? v * (1.0 / n) : v;
}

inline bool all_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Row-major 3x3 matrix; only what the pipeline needs.
struct Mat3 {
  std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static Mat3 identity() { return {}; }

  static Mat3 rotation_z(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Mat3 r;
    r.m = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    return r;
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
        r.m[i][j] = s;
      }
    return r;
  }

  Mat3 transpose() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }

  double determinant() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }
};

// Rigid motion p -> R p + t.
struct RigidTransform {
  Mat3 rotation;
  Vec3 translation;

  static RigidTransform identity() { return {}; }

  static RigidTransform translate(const Vec3& t) { return {Mat3::identity(), t}; }

  static RigidTransform rotate_z(double angle) {
    return {Mat3::rotation_z(angle), Vec3{}};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  // Composition: (a.then(b))(p) == b(a(p)).
  RigidTransform then(const RigidTransform& b) const {
    return {b.rotation * rotation, b.rotation * translation + b.translation};
  }

  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, (rt * translation) * -1.0};
  }

  // True when the rotation block is orthonormal with determinant +1.
  bool is_rigid(double tol = 1e-6) const {
    const Mat3 should_be_identity = rotation * rotation.transpose();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double want = i == j ? 1.0 : 0.0;
        if (std::abs(should_be_identity.m[i][j] - want) > tol) return false;
      }
    return std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

enum class Category { kCar };

// Oriented 3D box, yaw about +Z only, right-handed LiDAR frame
// (+X forward, +Y left, +Z up).
struct Box3D {
  Vec3 center;
  double length = 0.0;  // extent along box +X
  double width = 0.0;   // extent along box +Y
  double height = 0.0;  // extent along box +Z
  double yaw = 0.0;     // radians in (-pi, pi]
  Category category = Category::kCar;

  double volume() const { return length * width * height; }
  double bottom_z() const { return center.z - 0.5 * height; }
  double top_z() const { return center.z + 0.5 * height; }
};

inline Box3D make_box3d(const Vec3& center, double length, double width,
                        double height, double yaw,
                        Category category = Category::kCar) {
  return {center, length, width, height, normalize_angle(yaw), category};
}

inline bool is_valid(const Box3D& b) {
  return all_finite(b.center) && b.length > 0.0 && b.width > 0.0 &&
         b.height > 0.0 && std::isfinite(b.yaw) && b.yaw > -kPi - kGeomEps &&
         b.yaw <= kPi + kGeomEps;
}

// Axis-aligned image-plane box, pixels.
struct Box2D {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool contains(double u, double v) const {
    return u >= x_min && u <= x_max && v >= y_min && v <= y_max;
  }

  Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
};

inline bool is_valid(const Box2D& b) {
  return std::isfinite(b.x_min) && std::isfinite(b.x_max) &&
         std::isfinite(b.y_min) && std::isfinite(b.y_max) &&
         b.x_min < b.x_max && b.y_min < b.y_max;
}

// Counter-clockwise convex polygon.
struct ConvexPolygon2D {
  std::vector<Vec2> vertices;
};

// Signed shoelace area; positive for CCW rings.
inline double polygon_area(const std::vector<Vec2>& v) {
  if (v.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

inline double polygon_area(const ConvexPolygon2D& p) {
  return polygon_area(p.vertices);
}

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<float> intensity;  // per point, in [0, 1]

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// ---------------------------------------------------------------------------
// Box corners
// ---------------------------------------------------------------------------

// Corner order contract: bottom face counter-clockwise seen from +Z,
// starting at front-left, then the top face in the same order.
//   0 (+l/2,+w/2,-h/2)  1 (-l/2,+w/2,-h/2)  2 (-l/2,-w/2,-h/2)  3 (+l/2,-w/2,-h/2)
//   4..7 same x/y with +h/2
inline std::array<Vec3, 8> corners_3d(const Box3D& box) {
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  const double hh = 0.5 * box.height;
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    const double x = c * local[i].x - s * local[i].y + box.center.x;
    const double y = s * local[i].x + c * local[i].y + box.center.y;
    out[i] = {x, y, box.center.z - hh};
    out[i + 4] = {x, y, box.center.z + hh};
  }
  return out;
}

// Inverse of corners_3d for corner sets that follow the order contract.
inline Box3D box_from_corners(const std::array<Vec3, 8>& c) {
  Vec3 center{};
  for (const Vec3& p : c) center = center + p;
  center = center * (1.0 / 8.0);
  // Front face = corners 0,3 (+4,7); rear face = 1,2 (+5,6).
  const Vec3 front = (c[0] + c[3] + c[4] + c[7]) * 0.25;
  const Vec3 rear = (c[1] + c[2] + c[5] + c[6]) * 0.25;
  const Vec3 axis = front - rear;
  const double yaw = std::atan2(axis.y, axis.x);
  const double length = norm(axis);
  const Vec3 left = (c[0] + c[1] + c[4] + c[5]) * 0.25;
  const Vec3 right = (c[2] + c[3] + c[6] + c[7]) * 0.25;
  const double width = norm(left - right);
  const double height = (c[4].z + c[5].z + c[6].z + c[7].z -
                         c[0].z - c[1].z - c[2].z - c[3].z) *
                        0.25;
  return make_box3d(center, length, width, height, yaw);
}

// Bird's-eye footprint, CCW (same order as corners 0..3).
inline std::array<Vec2, 4> bev_footprint(const Box3D& box) {
  const auto c = corners_3d(box);
  return {c[0].xy(), c[1].xy(), c[2].xy(), c[3].xy()};
}

// ---------------------------------------------------------------------------
// Convex hull (Andrew monotone chain, collinear points dropped)
// ---------------------------------------------------------------------------

inline ConvexPolygon2D convex_hull(std::vector<Vec2> pts) {
  if (pts.size() < 3) throw DegenerateHullError("convex_hull: fewer than 3 points");
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2& a, const Vec2& b) {
                          return std::abs(a.x - b.x) <= kGeomEps &&
                                 std::abs(a.y - b.y) <= kGeomEps;
                        }),
            pts.end());
  if (pts.size() < 3) throw DegenerateHullError("convex_hull: degenerate input");

  const std::size_t n = pts.size();
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {  // lower chain
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= kGeomEps)
      --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {  // upper chain
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= kGeomEps)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw DegenerateHullError("convex_hull: all points collinear");
  return ConvexPolygon2D{std::move(hull)};
}

// ---------------------------------------------------------------------------
// Convex clipping and IoU kernels
// ---------------------------------------------------------------------------

// Sutherland-Hodgman: clip a convex subject polygon by a CCW convex clip
// polygon. Result may be empty.
inline std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject,
                                     const std::vector<Vec2>& clip) {
  std::vector<Vec2> output = subject;
  for (std::size_t e = 0, n = clip.size(); e < n && !output.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % n];
    const Vec2 edge = b - a;
    std::vector<Vec2> input;
    input.swap(output);
    output.reserve(input.size() + 2);
    for (std::size_t i = 0, m = input.size(); i < m; ++i) {
      const Vec2& cur = input[i];
      const Vec2& nxt = input[(i + 1) % m];
      const double dc = cross(edge, cur - a);
      const double dn = cross(edge, nxt - a);
      const bool cur_in = dc >= -kGeomEps;
      const bool nxt_in = dn >= -kGeomEps;
      if (cur_in) output.push_back(cur);
      if (cur_in != nxt_in) {
        const double t = dc / (dc - dn);
        output.push_back(cur + (nxt - cur) * t);
      }
    }
  }
  return output;
}

inline double intersection_area(const std::vector<Vec2>& a,
                                const std::vector<Vec2>& b) {
  const std::vector<Vec2> inter = clip_convex(a, b);
  return std::max(0.0, polygon_area(inter));
}

// 2D IoU between a convex polygon and an axis-aligned rectangle.
inline double polygon_rect_iou(const ConvexPolygon2D& poly, const Box2D& rect) {
  const std::vector<Vec2> r{{rect.x_min, rect.y_min},
                            {rect.x_max, rect.y_min},
                            {rect.x_max, rect.y_max},
                            {rect.x_min, rect.y_max}};
  const double pa = std::abs(polygon_area(poly));
  const double ra = rect.area();
  const double inter = intersection_area(poly.vertices, r);
  const double uni = pa + ra - inter;
  if (uni <= kGeomEps) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Rotated-rectangle IoU of the XY footprints.
inline double iou_bev(const Box3D& a, const Box3D& b) {
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  const std::vector<Vec2> pa(fa.begin(), fa.end());
  const std::vector<Vec2> pb(fb.begin(), fb.end());
  const double inter = intersection_area(pa, pb);
  const double uni = a.length * a.width + b.length * b.width - inter;
  if (uni <= kGeomEps) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Prism IoU: BEV intersection times vertical overlap over the volume union.
inline double iou_3d(const Box3D& a, const Box3D& b) {
  const double z_overlap =
      std::min(a.top_z(), b.top_z()) - std::max(a.bottom_z(), b.bottom_z());
  if (z_overlap <= 0.0) return 0.0;
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  const std::vector<Vec2> pa(fa.begin(), fa.end());
  const std::vector<Vec2> pb(fb.begin(), fb.end());
  const double inter_vol = intersection_area(pa, pb) * z_overlap;
  const double uni = a.volume() + b.volume() - inter_vol;
  if (uni <= kGeomEps) return 0.0;
  return std::clamp(inter_vol / uni, 0.0, 1.0);
}

// Indices of cloud points inside the oriented box; the boundary counts as
// inside within kGeomEps.
inline std::vector<std::size_t> points_in_box(const PointCloud& cloud,
                                              const Box3D& box) {
  std::vector<std::size_t> out;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.length + kGeomEps;
  const double hw = 0.5 * box.width + kGeomEps;
  const double hh = 0.5 * box.height + kGeomEps;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3 d = cloud.points[i] - box.center;
    const double lx = c * d.x + s * d.y;
    const double ly = -s * d.x + c * d.y;
    if (std::abs(lx) <= hl && std::abs(ly) <= hw && std::abs(d.z) <= hh)
      out.push_back(i);
  }
  return out;
}

}  // namespace wlst
