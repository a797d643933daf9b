#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wlst/camera.hpp"
#include "wlst/errors.hpp"
#include "wlst/frame.hpp"
#include "wlst/geometry.hpp"
#include "wlst/pseudo_label.hpp"

namespace wlst {

// One line of a KITTI object label file. Dimensions are stored (h, w, l) and
// the location is the bottom-face center in camera coordinates, following
// the devkit format.
struct KittiLabel {
  std::string type = "Car";
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  Box2D bbox;
  double height = 0.0;
  double width = 0.0;
  double length = 0.0;
  Vec3 location;       // camera frame
  double rotation_y = 0.0;
  std::optional<double> score;
};

inline KittiLabel parse_kitti_label(const std::string& line, std::size_t line_no = 1) {
  std::istringstream ss(line);
  std::vector<std::string> fields;
  std::string tok;
  while (ss >> tok) fields.push_back(tok);
  if (fields.size() != 15 && fields.size() != 16)
    throw ParseError("expected 15 or 16 fields, got " + std::to_string(fields.size()),
                     line_no);

  const auto num = [&](int idx) {
    try {
      std::size_t used = 0;
      const double v = std::stod(fields[idx], &used);
      if (used != fields[idx].size())
        throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ParseError("invalid numeric field '" + fields[idx] + "'", line_no, idx);
    }
  };

  KittiLabel label;
  label.type = fields[0];
  label.truncation = num(1);
  label.occlusion = static_cast<int>(num(2));
  label.alpha = num(3);
  label.bbox = {num(4), num(5), num(6), num(7)};
  label.height = num(8);
  label.width = num(9);
  label.length = num(10);
  label.location = {num(11), num(12), num(13)};
  label.rotation_y = num(14);
  if (fields.size() == 16) label.score = num(15);
  return label;
}

inline std::vector<KittiLabel> parse_kitti_label_file(const std::string& text) {
  std::vector<KittiLabel> out;
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_kitti_label(line, line_no));
  }
  return out;
}

// Fixed two-decimal float formatting keeps output files byte-deterministic.
inline std::string write_kitti_label(const std::vector<KittiLabel>& records) {
  std::string out;
  char buf[64];
  for (const KittiLabel& r : records) {
    out += r.type;
    const auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), " %.2f", v);
      out += buf;
    };
    put(r.truncation);
    std::snprintf(buf, sizeof(buf), " %d", r.occlusion);
    out += buf;
    put(r.alpha);
    put(r.bbox.x_min);
    put(r.bbox.y_min);
    put(r.bbox.x_max);
    put(r.bbox.y_max);
    put(r.height);
    put(r.width);
    put(r.length);
    put(r.location.x);
    put(r.location.y);
    put(r.location.z);
    put(r.rotation_y);
    if (r.score) put(*r.score);
    out += '\n';
  }
  return out;
}

// Camera-frame label -> LiDAR-frame oriented box.
inline Box3D label_to_box3d(const KittiLabel& label, const CameraModel& cam) {
  const Vec3 bottom_lidar = cam.to_lidar(label.location);
  const Vec3 center = bottom_lidar + Vec3{0.0, 0.0, 0.5 * label.height};
  const Vec3 heading_cam{std::cos(label.rotation_y), 0.0, -std::sin(label.rotation_y)};
  const Vec3 heading_lidar = cam.lidar_to_cam.rotation.transpose() * heading_cam;
  const double yaw = std::atan2(heading_lidar.y, heading_lidar.x);
  return make_box3d(center, label.length, label.width, label.height, yaw);
}

// LiDAR-frame box -> camera-frame label. The 2D box is the clamped bound of
// the projected corners (a unit placeholder when the box is out of view).
inline KittiLabel box3d_to_label(const Box3D& box, const CameraModel& cam,
                                 std::optional<double> score = std::nullopt) {
  KittiLabel label;
  label.type = "Car";
  label.height = box.height;
  label.width = box.width;
  label.length = box.length;
  const Vec3 bottom = box.center - Vec3{0.0, 0.0, 0.5 * box.height};
  label.location = cam.to_camera(bottom);
  const Vec3 heading_lidar{std::cos(box.yaw), std::sin(box.yaw), 0.0};
  const Vec3 heading_cam = cam.lidar_to_cam.rotation * heading_lidar;
  label.rotation_y = std::atan2(-heading_cam.z, heading_cam.x);
  label.alpha =
      normalize_angle(label.rotation_y - std::atan2(label.location.x, label.location.z));
  label.score = score;

  const auto corners = corners_3d(box);
  double umin = 1e18, umax = -1e18, vmin = 1e18, vmax = -1e18;
  bool in_front = true;
  for (const Vec3& c : corners) {
    const PixelPoint px = cam.project(c);
    if (px.depth <= kGeomEps) {
      in_front = false;
      break;
    }
    umin = std::min(umin, px.u);
    umax = std::max(umax, px.u);
    vmin = std::min(vmin, px.v);
    vmax = std::max(vmax, px.v);
  }
  if (in_front) {
    umin = std::clamp(umin, 0.0, static_cast<double>(cam.image_width));
    umax = std::clamp(umax, 0.0, static_cast<double>(cam.image_width));
    vmin = std::clamp(vmin, 0.0, static_cast<double>(cam.image_height));
    vmax = std::clamp(vmax, 0.0, static_cast<double>(cam.image_height));
  }
  if (!in_front || umax - umin < 1.0 || vmax - vmin < 1.0) {
    label.bbox = {0.0, 0.0, 1.0, 1.0};
  } else {
    label.bbox = {umin, vmin, umax, vmax};
  }
  return label;
}

namespace detail {

inline std::vector<double> calib_values(const std::string& text,
                                        const std::string& key,
                                        std::size_t expected) {
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind(key + ":", 0) != 0) continue;
    std::istringstream ls(line.substr(key.size() + 1));
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.size() != expected)
      throw MalformedFileError("calib key " + key + " has " +
                               std::to_string(vals.size()) + " values, expected " +
                               std::to_string(expected));
    return vals;
  }
  throw MissingKeyError("calib missing key " + key);
}

}  // namespace detail

// Compose lidar_to_cam = R0_rect * Tr_velo_to_cam, projection = P2.
inline CameraModel parse_kitti_calib(const std::string& text, int image_width = 1242,
                                     int image_height = 375) {
  const std::vector<double> p2 = detail::calib_values(text, "P2", 12);
  const std::vector<double> r0 = detail::calib_values(text, "R0_rect", 9);
  const std::vector<double> tr = detail::calib_values(text, "Tr_velo_to_cam", 12);

  CameraModel cam;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) cam.projection.p[i][j] = p2[i * 4 + j];

  Mat3 r0m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r0m.m[i][j] = r0[i * 3 + j];
  Mat3 trr;
  Vec3 trt;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) trr.m[i][j] = tr[i * 4 + j];
  }
  trt = {tr[3], tr[7], tr[11]};
  cam.lidar_to_cam = {r0m * trr, r0m * trt};
  cam.image_width = image_width;
  cam.image_height = image_height;
  cam.validate();
  return cam;
}

inline std::string write_kitti_calib(const CameraModel& cam) {
  char buf[64];
  std::string out;
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), " %.12e", v);
    out += buf;
  };
  out += "P2:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) put(cam.projection.p[i][j]);
  out += "\nR0_rect:";
  const Mat3 identity = Mat3::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) put(identity.m[i][j]);
  out += "\nTr_velo_to_cam:";
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) put(cam.lidar_to_cam.rotation.m[i][j]);
    put(i == 0 ? cam.lidar_to_cam.translation.x
               : i == 1 ? cam.lidar_to_cam.translation.y
                        : cam.lidar_to_cam.translation.z);
  }
  out += '\n';
  return out;
}

// Velodyne binary: little-endian float32 (x, y, z, intensity) quadruplets.
inline PointCloud load_point_cloud(const std::filesystem::path& path,
                                   bool range_filter = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFileError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0)
    throw MalformedFileError(path.string() + ": size " +
                             std::to_string(bytes.size()) +
                             " is not a multiple of 16 bytes");

  const auto read_f32 = [&](std::size_t offset) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b)
      u = (u << 8) | static_cast<unsigned char>(bytes[offset + b]);
    return std::bit_cast<float>(u);
  };

  PointCloud cloud;
  const std::size_t n = bytes.size() / 16;
  cloud.points.reserve(n);
  cloud.intensity.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p{read_f32(i * 16), read_f32(i * 16 + 4), read_f32(i * 16 + 8)};
    const float inten = read_f32(i * 16 + 12);
    if (range_filter &&
        (std::abs(p.x) > kRangeXY || std::abs(p.y) > kRangeXY ||
         p.z < kRangeZMin || p.z > kRangeZMax))
      continue;
    cloud.points.push_back(p);
    cloud.intensity.push_back(inten);
  }
  return cloud;
}

inline void save_point_cloud(const std::filesystem::path& path,
                             const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedFileError("cannot write " + path.string());
  const auto put_f32 = [&](float v) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
    const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                       static_cast<char>((u >> 16) & 0xff),
                       static_cast<char>((u >> 24) & 0xff)};
    out.write(b, 4);
  };
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    put_f32(static_cast<float>(cloud.points[i].x));
    put_f32(static_cast<float>(cloud.points[i].y));
    put_f32(static_cast<float>(cloud.points[i].z));
    put_f32(i < cloud.intensity.size() ? cloud.intensity[i] : 0.0f);
  }
}

// ---------------------------------------------------------------------------
// Dataset directory helpers (KITTI layout: velodyne/, calib/, label_2/)
// ---------------------------------------------------------------------------

inline std::vector<std::string> list_frame_ids(const std::filesystem::path& dir,
                                               const std::string& extension) {
  std::vector<std::string> ids;
  if (!std::filesystem::exists(dir)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != extension) continue;
    ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedFileError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary);  // '\n' endings, verbatim
  if (!out) throw MalformedFileError("cannot write " + path.string());
  out << text;
}

struct FrameLoadOptions {
  int image_width = 1242;
  int image_height = 375;
  bool range_filter = true;
  std::string category = "Car";
};

// Load one KITTI frame. Weak 2D labels are the (clamped) 2D boxes of the
// matching-category label lines; 3D ground truth is present only when the
// label file exists and carries plausible dimensions.
inline FrameRecord load_frame(const std::filesystem::path& root,
                              const std::string& frame_id,
                              const FrameLoadOptions& opts = {}) {
  FrameRecord frame;
  frame.frame_id = frame_id;
  frame.cam = parse_kitti_calib(read_text_file(root / "calib" / (frame_id + ".txt")),
                                opts.image_width, opts.image_height);
  frame.cloud =
      load_point_cloud(root / "velodyne" / (frame_id + ".bin"), opts.range_filter);

  const std::filesystem::path label_path = root / "label_2" / (frame_id + ".txt");
  if (std::filesystem::exists(label_path)) {
    std::vector<Box3D> gts;
    for (const KittiLabel& l : parse_kitti_label_file(read_text_file(label_path))) {
      if (l.type != opts.category) continue;
      Box2D weak{std::clamp(l.bbox.x_min, 0.0, static_cast<double>(opts.image_width)),
                 std::clamp(l.bbox.y_min, 0.0, static_cast<double>(opts.image_height)),
                 std::clamp(l.bbox.x_max, 0.0, static_cast<double>(opts.image_width)),
                 std::clamp(l.bbox.y_max, 0.0, static_cast<double>(opts.image_height))};
      if (is_valid(weak)) frame.weak.push_back(weak);
      if (l.height > 0.0 && l.width > 0.0 && l.length > 0.0)
        gts.push_back(label_to_box3d(l, frame.cam));
    }
    frame.gt3d = std::move(gts);
  }
  return frame;
}

}  // namespace wlst
