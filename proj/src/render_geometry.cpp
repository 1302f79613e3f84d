#include "capforge/render_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "capforge/errors.hpp"

namespace capforge {

auto NormalizationTransform::apply(const Vec3& p) const -> Vec3
{
  return {scale * p[0] + translation[0], scale * p[1] + translation[1], scale * p[2] + translation[2]};
}

auto normalize_to_unit_cube(const Vec3& bbox_min, const Vec3& bbox_max) -> NormalizationTransform
{
  double extent = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(bbox_min[i] <= bbox_max[i])) {
      throw Error(Errc::invalid_argument, "bbox_min exceeds bbox_max");
    }
    extent = std::max(extent, bbox_max[i] - bbox_min[i]);
  }
  if (!(extent > 0.0) || !std::isfinite(extent)) {
    throw Error(Errc::degenerate_extent, "bounding box has zero extent");
  }
  NormalizationTransform t;
  t.scale = 1.0 / extent;
  for (std::size_t i = 0; i < 3; ++i) {
    const double center = 0.5 * (bbox_min[i] + bbox_max[i]);
    t.translation[i] = -center * t.scale;
  }
  return t;
}

auto generate_camera_rig(const PipelineConfig& config) -> std::vector<CameraPose>
{
  const int m = config.views_per_object;
  if (m < 2) {
    throw Error(Errc::rig_too_small, "camera rig needs at least 2 views");
  }
  const int low_a = m / 4;
  const int low_b = (3 * m) / 4;
  std::vector<CameraPose> poses;
  poses.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    CameraPose pose;
    pose.azimuth_deg = 360.0 * i / m;
    pose.elevation_deg = (i == low_a || i == low_b) ? config.elevation_below_deg : config.elevation_above_deg;
    pose.radius = config.camera_radius;
    pose.resolution = config.render_resolution;
    poses.push_back(pose);
  }
  return poses;
}

auto emit_render_plan(const std::vector<AssetRecord>& assets, const PipelineConfig& config) -> RenderPlanBatch
{
  RenderPlanBatch batch;
  if (assets.empty()) {
    return batch;
  }
  const auto rig = generate_camera_rig(config);
  for (const auto& asset : assets) {
    try {
      RenderPlan plan;
      plan.uid = asset.uid;
      plan.transform = normalize_to_unit_cube(asset.bbox_min, asset.bbox_max);
      plan.poses = rig;
      plan.resolution = config.render_resolution;
      plan.lighting_preset = config.lighting_preset;
      batch.plans.push_back(std::move(plan));
    } catch (const Error& e) {
      batch.skipped.push_back({asset.uid, std::string(errc_name(e.code()))});
    }
  }
  return batch;
}

auto serialize_render_plans(const std::vector<RenderPlan>& plans) -> std::string
{
  std::string out;
  for (const auto& plan : plans) {
    nlohmann::ordered_json j;
    j["uid"] = plan.uid;
    j["scale"] = plan.transform.scale;
    j["translation"] = plan.transform.translation;
    auto poses = nlohmann::ordered_json::array();
    for (const auto& pose : plan.poses) {
      poses.push_back({{"azimuth_deg", pose.azimuth_deg},
                       {"elevation_deg", pose.elevation_deg},
                       {"radius", pose.radius}});
    }
    j["poses"] = std::move(poses);
    j["resolution"] = plan.resolution;
    j["lighting_preset"] = plan.lighting_preset;
    out += j.dump();
    out += '\n';
  }
  return out;
}

auto render_image_path(const std::string& render_dir, const std::string& uid, int view_index) -> std::string
{
  return (std::filesystem::path(render_dir) / uid / (std::to_string(view_index) + ".png")).string();
}

}  // namespace capforge
