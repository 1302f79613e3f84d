#pragma once

#include <string>
#include <vector>

#include "capforge/core_types.hpp"

namespace capforge {

/// Maps a point p to scale * p + translation.
struct NormalizationTransform {
  double scale = 1.0;
  Vec3 translation{0.0, 0.0, 0.0};

  [[nodiscard]] auto apply(const Vec3& p) const -> Vec3;
};

struct RenderPlan {
  std::string uid;
  NormalizationTransform transform;
  std::vector<CameraPose> poses;
  int resolution = 512;
  std::string lighting_preset;
};

struct RenderSkip {
  std::string uid;
  std::string reason;
};

struct RenderPlanBatch {
  std::vector<RenderPlan> plans;
  std::vector<RenderSkip> skipped;
};

/// Scales by the inverse of the largest extent and recenters the box on the
/// origin, so the result fits [-0.5, 0.5]^3 with max extent exactly 1.
/// Throws Error(degenerate_extent) when every extent is zero.
auto normalize_to_unit_cube(const Vec3& bbox_min, const Vec3& bbox_max) -> NormalizationTransform;

/// M poses evenly spaced in azimuth from 0 degrees. The poses at indices
/// floor(M/4) and floor(3M/4) look from below (elevation_below_deg); the rest
/// use elevation_above_deg. For M = 8 that places the low views at 90 and
/// 270 degrees. Throws Error(rig_too_small) for M < 2.
auto generate_camera_rig(const PipelineConfig& config) -> std::vector<CameraPose>;

/// One plan per asset with a usable bounding box; degenerate assets are
/// skipped and reported instead of aborting the batch.
auto emit_render_plan(const std::vector<AssetRecord>& assets, const PipelineConfig& config) -> RenderPlanBatch;

/// Line-delimited serialization of plans, one JSON object per line.
auto serialize_render_plans(const std::vector<RenderPlan>& plans) -> std::string;

/// Conventional location of a rendered view: <render_dir>/<uid>/<view_index>.png
auto render_image_path(const std::string& render_dir, const std::string& uid, int view_index) -> std::string;

}  // namespace capforge
