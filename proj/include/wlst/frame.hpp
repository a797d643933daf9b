#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wlst/camera.hpp"
#include "wlst/geometry.hpp"

namespace wlst {

// One sample: point cloud, weak 2D labels, calibration, optional 3D ground
// truth. weak_gt_index is simulator provenance (which ground-truth object a
// weak box came from); it stays empty for frames loaded from disk.
struct FrameRecord {
  std::string frame_id;
  PointCloud cloud;
  std::vector<Box2D> weak;
  std::optional<std::vector<Box3D>> gt3d;
  CameraModel cam;
  std::vector<int> weak_gt_index;
};

}  // namespace wlst
