#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wlst/errors.hpp"
#include "wlst/frustum_labeler.hpp"
#include "wlst/fusion.hpp"
#include "wlst/selftrain.hpp"
#include "wlst/simulate.hpp"

namespace wlst {

enum class Difficulty { kNone, kEasy, kModerate, kHard };

struct EvalOptions {
  double iou_threshold = 0.7;
  Difficulty difficulty = Difficulty::kNone;
};

struct IoOptions {
  int image_width = 1242;
  int image_height = 375;
  bool range_filter = true;
};

// Whole-run configuration: one structured file, flag overrides win.
struct RunConfig {
  std::uint64_t seed = 42;
  int jobs = 1;
  FusionConfig fusion;
  SceneSpec scene;
  LabelerProfile detector_profile = default_detector_profile();
  LabelerProfile autolabeler_profile = default_autolabeler_profile();
  LabelerConfig labeler;
  int selftrain_rounds = 5;
  int selftrain_frames = 300;
  double adaptation_lr = 0.5;
  std::vector<double> curriculum;
  AutolabelerMode autolabeler_mode = AutolabelerMode::kGeometric;
  bool fusion_enabled = true;
  bool nms_before_prob = true;
  EvalOptions eval;
  IoOptions io;

  SelfTrainConfig make_selftrain_config() const {
    SelfTrainConfig cfg;
    cfg.rounds = selftrain_rounds;
    cfg.num_frames = selftrain_frames;
    cfg.fusion = fusion;
    cfg.adaptation_lr = adaptation_lr;
    cfg.curriculum = curriculum;
    cfg.autolabeler_mode = autolabeler_mode;
    cfg.fusion_enabled = fusion_enabled;
    cfg.nms_before_prob = nms_before_prob;
    cfg.labeler = labeler;
    cfg.detector_profile = detector_profile;
    cfg.autolabeler_profile = autolabeler_profile;
    cfg.seed = seed;
    cfg.jobs = jobs;
    return cfg;
  }
};

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& allowed,
                                const std::string& section) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError("unknown config key '" + key + "' in " + section);
  }
}

inline Vec3 vec3_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(where + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
void maybe(const Json& obj, const std::string& key, T* out) {
  if (obj.contains(key)) *out = obj.at(key).get<T>();
}

inline void maybe_vec3(const Json& obj, const std::string& key, Vec3* out,
                       const std::string& section) {
  if (obj.contains(key)) *out = vec3_from(obj.at(key), section + "." + key);
}

inline void parse_fusion(const Json& j, FusionConfig* cfg) {
  reject_unknown_keys(j,
                      {"t_exist", "iou3d_min", "score_threshold", "nms_iou",
                       "nms_on_fused", "nms_use_3d_iou"},
                      "fusion");
  maybe(j, "t_exist", &cfg->t_exist);
  maybe(j, "iou3d_min", &cfg->iou3d_min);
  maybe(j, "score_threshold", &cfg->score_threshold);
  maybe(j, "nms_iou", &cfg->nms_iou);
  maybe(j, "nms_on_fused", &cfg->nms_on_fused);
  bool use_3d = cfg->nms_metric == NmsMetric::k3d;
  maybe(j, "nms_use_3d_iou", &use_3d);
  cfg->nms_metric = use_3d ? NmsMetric::k3d : NmsMetric::kBev;
  const auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(cfg->t_exist) || !in_unit(cfg->iou3d_min) ||
      !in_unit(cfg->score_threshold) || !in_unit(cfg->nms_iou))
    throw ConfigError("fusion thresholds must lie in (0, 1)");
}

inline void parse_scene(const Json& j, SceneSpec* spec) {
  reject_unknown_keys(j,
                      {"num_objects", "size_mean", "size_std", "placement_min_range",
                       "placement_extent", "points_per_m2_at_10m", "density_falloff",
                       "ground_extent", "ground_density", "occlusion_probability",
                       "sensor_height"},
                      "scene");
  maybe(j, "num_objects", &spec->num_objects);
  maybe_vec3(j, "size_mean", &spec->size_mean, "scene");
  maybe_vec3(j, "size_std", &spec->size_std, "scene");
  maybe(j, "placement_min_range", &spec->placement_min_range);
  maybe(j, "placement_extent", &spec->placement_extent);
  maybe(j, "points_per_m2_at_10m", &spec->points_per_m2_at_10m);
  maybe(j, "density_falloff", &spec->density_falloff);
  maybe(j, "ground_extent", &spec->ground_extent);
  maybe(j, "ground_density", &spec->ground_density);
  maybe(j, "occlusion_probability", &spec->occlusion_probability);
  maybe(j, "sensor_height", &spec->sensor_height);
  if (spec->num_objects < 0 || spec->points_per_m2_at_10m <= 0.0 ||
      spec->ground_density <= 0.0)
    throw ConfigError("scene densities must be positive");
  if (spec->occlusion_probability < 0.0 || spec->occlusion_probability > 1.0)
    throw ConfigError("scene.occlusion_probability must lie in [0, 1]");
}

inline void parse_profile(const Json& j, const std::string& section,
                          LabelerProfile* p) {
  reject_unknown_keys(j,
                      {"size_bias", "center_bias", "yaw_noise_std", "center_noise_std",
                       "fp_rate", "fn_rate", "score_noise", "fp_score_min",
                       "fp_score_max"},
                      section);
  maybe_vec3(j, "size_bias", &p->size_bias, section);
  maybe_vec3(j, "center_bias", &p->center_bias, section);
  maybe(j, "yaw_noise_std", &p->yaw_noise_std);
  maybe(j, "center_noise_std", &p->center_noise_std);
  maybe(j, "fp_rate", &p->fp_rate);
  maybe(j, "fn_rate", &p->fn_rate);
  maybe(j, "score_noise", &p->score_noise);
  maybe(j, "fp_score_min", &p->fp_score_min);
  maybe(j, "fp_score_max", &p->fp_score_max);
  if (p->fn_rate < 0.0 || p->fn_rate > 1.0)
    throw ConfigError(section + ".fn_rate must lie in [0, 1]");
  if (p->fp_rate < 0.0) throw ConfigError(section + ".fp_rate must be >= 0");
}

inline void parse_labeler(const Json& j, LabelerConfig* cfg) {
  reject_unknown_keys(j,
                      {"near", "far", "min_points", "plane_tol", "ransac_iters",
                       "ground_normal_min_z", "cluster_radius", "angle_step_deg",
                       "stage2_angle_step_deg", "min_dim"},
                      "labeler");
  maybe(j, "near", &cfg->near);
  maybe(j, "far", &cfg->far);
  maybe(j, "min_points", &cfg->min_points);
  maybe(j, "plane_tol", &cfg->plane_tol);
  maybe(j, "ransac_iters", &cfg->ransac_iters);
  maybe(j, "ground_normal_min_z", &cfg->ground_normal_min_z);
  maybe(j, "cluster_radius", &cfg->cluster_radius);
  maybe(j, "angle_step_deg", &cfg->angle_step_deg);
  maybe(j, "stage2_angle_step_deg", &cfg->stage2_angle_step_deg);
  maybe(j, "min_dim", &cfg->min_dim);
  if (!(cfg->near > 0.0 && cfg->near < cfg->far))
    throw ConfigError("labeler requires 0 < near < far");
  if (cfg->min_points < 3) throw ConfigError("labeler.min_points must be >= 3");
}

inline void parse_selftrain(const Json& j, RunConfig* cfg) {
  reject_unknown_keys(j,
                      {"rounds", "frames", "adaptation_lr", "curriculum",
                       "autolabeler_mode", "fusion_enabled", "nms_before_prob"},
                      "selftrain");
  maybe(j, "rounds", &cfg->selftrain_rounds);
  maybe(j, "frames", &cfg->selftrain_frames);
  maybe(j, "adaptation_lr", &cfg->adaptation_lr);
  if (j.contains("curriculum")) {
    cfg->curriculum = j.at("curriculum").get<std::vector<double>>();
    for (std::size_t i = 0; i < cfg->curriculum.size(); ++i) {
      if (cfg->curriculum[i] < 0.0)
        throw ConfigError("selftrain.curriculum multipliers must be >= 0");
      if (i > 0 && cfg->curriculum[i] < cfg->curriculum[i - 1])
        throw ConfigError("selftrain.curriculum must be non-decreasing");
    }
  }
  if (j.contains("autolabeler_mode")) {
    const std::string mode = j.at("autolabeler_mode").get<std::string>();
    if (mode == "geometric")
      cfg->autolabeler_mode = AutolabelerMode::kGeometric;
    else if (mode == "simulated")
      cfg->autolabeler_mode = AutolabelerMode::kSimulated;
    else
      throw ConfigError("selftrain.autolabeler_mode must be geometric|simulated");
  }
  maybe(j, "fusion_enabled", &cfg->fusion_enabled);
  maybe(j, "nms_before_prob", &cfg->nms_before_prob);
  if (cfg->selftrain_rounds < 1) throw ConfigError("selftrain.rounds must be >= 1");
  if (cfg->selftrain_frames < 1) throw ConfigError("selftrain.frames must be >= 1");
}

inline void parse_eval(const Json& j, EvalOptions* eval) {
  reject_unknown_keys(j, {"iou_threshold", "difficulty"}, "eval");
  maybe(j, "iou_threshold", &eval->iou_threshold);
  if (j.contains("difficulty")) {
    const std::string d = j.at("difficulty").get<std::string>();
    if (d == "none")
      eval->difficulty = Difficulty::kNone;
    else if (d == "easy")
      eval->difficulty = Difficulty::kEasy;
    else if (d == "moderate")
      eval->difficulty = Difficulty::kModerate;
    else if (d == "hard")
      eval->difficulty = Difficulty::kHard;
    else
      throw ConfigError("eval.difficulty must be none|easy|moderate|hard");
  }
  if (eval->iou_threshold <= 0.0 || eval->iou_threshold > 1.0)
    throw ConfigError("eval.iou_threshold must lie in (0, 1]");
}

inline void parse_io(const Json& j, IoOptions* io) {
  reject_unknown_keys(j, {"image_width", "image_height", "range_filter"}, "io");
  maybe(j, "image_width", &io->image_width);
  maybe(j, "image_height", &io->image_height);
  maybe(j, "range_filter", &io->range_filter);
  if (io->image_width <= 0 || io->image_height <= 0)
    throw ConfigError("io image size must be positive");
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  detail::Json j;
  try {
    j = detail::Json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"seed", "jobs", "fusion", "scene", "detector_profile",
                               "autolabeler_profile", "labeler", "selftrain", "eval",
                               "io"},
                              "config root");
  RunConfig cfg;
  detail::maybe(j, "seed", &cfg.seed);
  detail::maybe(j, "jobs", &cfg.jobs);
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (j.contains("fusion")) detail::parse_fusion(j.at("fusion"), &cfg.fusion);
  if (j.contains("scene")) detail::parse_scene(j.at("scene"), &cfg.scene);
  if (j.contains("detector_profile"))
    detail::parse_profile(j.at("detector_profile"), "detector_profile",
                          &cfg.detector_profile);
  if (j.contains("autolabeler_profile"))
    detail::parse_profile(j.at("autolabeler_profile"), "autolabeler_profile",
                          &cfg.autolabeler_profile);
  if (j.contains("labeler")) detail::parse_labeler(j.at("labeler"), &cfg.labeler);
  if (j.contains("selftrain")) detail::parse_selftrain(j.at("selftrain"), &cfg);
  if (j.contains("eval")) detail::parse_eval(j.at("eval"), &cfg.eval);
  if (j.contains("io")) detail::parse_io(j.at("io"), &cfg.io);

  cfg.detector_profile.role = LabelerRole::kDetector;
  cfg.autolabeler_profile.role = LabelerRole::kAutolabeler;
  cfg.scene.seed = cfg.seed;
  cfg.scene.camera.image_width = cfg.io.image_width;
  cfg.scene.camera.image_height = cfg.io.image_height;
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace wlst
