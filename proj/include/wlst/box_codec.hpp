#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "wlst/geometry.hpp"

namespace wlst {

// Heading-bin and size-template box parameterization: 12 even heading bins
// over (-pi, pi] and 3 (l, w, h) size templates.
struct BoxCodec {
  static constexpr int kNumHeadingBins = 12;
  std::array<Vec3, 3> templates{{{3.9, 1.6, 1.56}, {4.7, 2.1, 1.7}, {10.0, 2.6, 3.2}}};

  static constexpr double bin_width() { return 2.0 * kPi / kNumHeadingBins; }

  double bin_center(int bin_id) const {
    return normalize_angle(bin_id * bin_width());
  }
};

struct EncodedBox {
  int bin_id = 0;            // in [0, 12)
  double bin_residual = 0.0; // yaw minus bin center, in (-pi/12, pi/12]
  int template_id = 0;       // in [0, 3)
  Vec3 size_residuals;       // (dims - template) / template
  Vec3 center;
};

inline EncodedBox encode_box(const Box3D& box, const BoxCodec& codec) {
  const double step = BoxCodec::bin_width();
  const double yaw = normalize_angle(box.yaw);
  long bin = std::lround(yaw / step);
  double residual = yaw - static_cast<double>(bin) * step;
  // Keep the residual in the half-open interval (-step/2, step/2].
  if (residual <= -0.5 * step) {
    bin -= 1;
    residual += step;
  } else if (residual > 0.5 * step) {
    bin += 1;
    residual -= step;
  }
  const int bin_id =
      static_cast<int>(((bin % BoxCodec::kNumHeadingBins) + BoxCodec::kNumHeadingBins) %
                       BoxCodec::kNumHeadingBins);

  int template_id = 0;
  double best = -1.0;
  for (int t = 0; t < static_cast<int>(codec.templates.size()); ++t) {
    const Vec3& tpl = codec.templates[t];
    const double cost = std::abs(box.length - tpl.x) / tpl.x +
                        std::abs(box.width - tpl.y) / tpl.y +
                        std::abs(box.height - tpl.z) / tpl.z;
    if (best < 0.0 || cost < best) {
      best = cost;
      template_id = t;
    }
  }
  const Vec3& tpl = codec.templates[template_id];
  const Vec3 size_residuals{(box.length - tpl.x) / tpl.x,
                            (box.width - tpl.y) / tpl.y,
                            (box.height - tpl.z) / tpl.z};
  return {bin_id, residual, template_id, size_residuals, box.center};
}

inline Box3D decode_box(const EncodedBox& enc, const BoxCodec& codec) {
  if (enc.bin_id < 0 || enc.bin_id >= BoxCodec::kNumHeadingBins)
    throw std::out_of_range("decode_box: bin_id out of range");
  if (enc.template_id < 0 ||
      enc.template_id >= static_cast<int>(codec.templates.size()))
    throw std::out_of_range("decode_box: template_id out of range");
  const double yaw =
      normalize_angle(enc.bin_id * BoxCodec::bin_width() + enc.bin_residual);
  const Vec3& tpl = codec.templates[enc.template_id];
  return make_box3d(enc.center, tpl.x * (1.0 + enc.size_residuals.x),
                    tpl.y * (1.0 + enc.size_residuals.y),
                    tpl.z * (1.0 + enc.size_residuals.z), yaw);
}

}  // namespace wlst
