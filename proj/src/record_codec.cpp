#include "capforge/record_codec.hpp"

#include <fmt/format.h>

#include "capforge/errors.hpp"
#include "capforge/hashing.hpp"

namespace capforge {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

auto vec3_from_json(const json& j, const char* field) -> Vec3
{
  if (!j.is_array() || j.size() != 3) {
    throw Error(Errc::parse_error, fmt::format("{} must be a 3-element array", field));
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename F>
auto guarded(const char* what, F&& f)
{
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, fmt::format("{}: {}", what, e.what()));
  }
}

}  // namespace

auto asset_to_json(const AssetRecord& r) -> ordered_json
{
  ordered_json j;
  j["uid"] = r.uid;
  j["license"] = render_license(r.license);
  j["bbox_min"] = r.bbox_min;
  j["bbox_max"] = r.bbox_max;
  j["has_camera_info"] = r.has_camera_info;
  j["images"] = r.image_paths;
  auto cameras = ordered_json::array();
  for (const auto& p : r.camera_poses) {
    cameras.push_back({{"azimuth_deg", p.azimuth_deg},
                       {"elevation_deg", p.elevation_deg},
                       {"radius", p.radius},
                       {"resolution", p.resolution}});
  }
  j["cameras"] = std::move(cameras);
  j["captions"] = r.captions;
  j["point_cloud"] = r.point_cloud_ref ? ordered_json(*r.point_cloud_ref) : ordered_json(nullptr);
  j["latent_code"] = r.latent_code_ref ? ordered_json(*r.latent_code_ref) : ordered_json(nullptr);
  return j;
}

auto asset_from_json(const json& j) -> AssetRecord
{
  return guarded("asset record", [&] {
    AssetRecord r;
    r.uid = j.at("uid").get<std::string>();
    r.license = parse_license(j.value("license", std::string{}));
    r.bbox_min = vec3_from_json(j.at("bbox_min"), "bbox_min");
    r.bbox_max = vec3_from_json(j.at("bbox_max"), "bbox_max");
    r.has_camera_info = j.value("has_camera_info", false);
    if (j.contains("images")) {
      r.image_paths = j.at("images").get<std::vector<std::string>>();
    }
    if (j.contains("cameras")) {
      for (const auto& c : j.at("cameras")) {
        CameraPose p;
        p.azimuth_deg = c.at("azimuth_deg").get<double>();
        p.elevation_deg = c.at("elevation_deg").get<double>();
        p.radius = c.at("radius").get<double>();
        p.resolution = c.value("resolution", 512);
        r.camera_poses.push_back(p);
      }
    }
    if (j.contains("captions")) {
      r.captions = j.at("captions").get<std::vector<std::string>>();
    }
    if (j.contains("point_cloud") && !j.at("point_cloud").is_null()) {
      r.point_cloud_ref = j.at("point_cloud").get<std::string>();
    }
    if (j.contains("latent_code") && !j.at("latent_code").is_null()) {
      r.latent_code_ref = j.at("latent_code").get<std::string>();
    }
    return r;
  });
}

auto final_caption_to_json(const FinalCaption& c) -> ordered_json
{
  ordered_json j;
  j["text"] = c.text;
  j["mode"] = render_caption_mode(c.mode);
  auto views = ordered_json::array();
  for (const auto& v : c.source_view_captions) {
    views.push_back({{"view_index", v.view_index}, {"text", v.text}, {"cosine_score", v.cosine_score}});
  }
  j["source_view_captions"] = std::move(views);
  return j;
}

auto final_caption_from_json(const json& j, const std::string& uid) -> FinalCaption
{
  return guarded("final caption", [&] {
    FinalCaption c;
    c.uid = uid;
    c.text = j.at("text").get<std::string>();
    const auto mode = parse_caption_mode(j.at("mode").get<std::string>());
    if (!mode) {
      throw Error(Errc::parse_error, "unknown caption mode");
    }
    c.mode = *mode;
    for (const auto& v : j.at("source_view_captions")) {
      c.source_view_captions.push_back(
          {v.at("text").get<std::string>(), v.at("view_index").get<int>(), v.at("cosine_score").get<double>()});
    }
    return c;
  });
}

auto entry_to_json(const ManifestEntry& e) -> ordered_json
{
  auto j = asset_to_json(e.asset);
  if (e.final_caption) {
    j["final_caption"] = final_caption_to_json(*e.final_caption);
  }
  return j;
}

auto entry_from_json(const json& j) -> ManifestEntry
{
  ManifestEntry e;
  e.asset = asset_from_json(j);
  if (j.contains("final_caption") && !j.at("final_caption").is_null()) {
    e.final_caption = final_caption_from_json(j.at("final_caption"), e.asset.uid);
  }
  return e;
}

auto config_to_json(const PipelineConfig& c) -> ordered_json
{
  ordered_json j;
  j["views_per_object"] = c.views_per_object;
  j["samples_per_view"] = c.samples_per_view;
  j["selection_embedding_dim"] = c.selection_embedding_dim;
  j["detector_threshold"] = c.detector_threshold;
  auto allow = ordered_json::array();
  for (const auto l : c.license_allowlist) {
    allow.push_back(render_license(l));
  }
  j["license_allowlist"] = std::move(allow);
  j["qa_mode"] = c.qa_mode;
  j["summary_prompt_template"] = c.summary_prompt_template;
  j["qa_prompt_1"] = c.qa_prompt_1;
  j["qa_prompt_2"] = c.qa_prompt_2;
  j["blocklist_path"] = c.blocklist_path;
  j["nucleus_p"] = c.nucleus_p;
  j["seed"] = c.seed;
  j["elevation_above_deg"] = c.elevation_above_deg;
  j["elevation_below_deg"] = c.elevation_below_deg;
  j["camera_radius"] = c.camera_radius;
  j["render_resolution"] = c.render_resolution;
  j["lighting_preset"] = c.lighting_preset;
  return j;
}

auto config_from_json(const json& j) -> PipelineConfig
{
  if (!j.is_object()) {
    throw Error(Errc::config_error, "pipeline section must be an object");
  }
  PipelineConfig c;
  const auto known = config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw Error(Errc::config_error, "unknown pipeline key '" + key + "'");
    }
  }
  try {
    c.views_per_object = j.value("views_per_object", c.views_per_object);
    c.samples_per_view = j.value("samples_per_view", c.samples_per_view);
    c.selection_embedding_dim = j.value("selection_embedding_dim", c.selection_embedding_dim);
    c.detector_threshold = j.value("detector_threshold", c.detector_threshold);
    if (j.contains("license_allowlist")) {
      c.license_allowlist.clear();
      for (const auto& l : j.at("license_allowlist")) {
        c.license_allowlist.insert(parse_license(l.get<std::string>()));
      }
    }
    c.qa_mode = j.value("qa_mode", c.qa_mode);
    c.summary_prompt_template = j.value("summary_prompt_template", c.summary_prompt_template);
    c.qa_prompt_1 = j.value("qa_prompt_1", c.qa_prompt_1);
    c.qa_prompt_2 = j.value("qa_prompt_2", c.qa_prompt_2);
    c.blocklist_path = j.value("blocklist_path", c.blocklist_path);
    c.nucleus_p = j.value("nucleus_p", c.nucleus_p);
    c.seed = j.value("seed", c.seed);
    c.elevation_above_deg = j.value("elevation_above_deg", c.elevation_above_deg);
    c.elevation_below_deg = j.value("elevation_below_deg", c.elevation_below_deg);
    c.camera_radius = j.value("camera_radius", c.camera_radius);
    c.render_resolution = j.value("render_resolution", c.render_resolution);
    c.lighting_preset = j.value("lighting_preset", c.lighting_preset);
  } catch (const json::exception& e) {
    throw Error(Errc::config_error, std::string("pipeline section: ") + e.what());
  }
  if (const auto problems = validate_config(c); !problems.empty()) {
    throw Error(Errc::config_error, problems.front());
  }
  return c;
}

auto config_hash(const PipelineConfig& config) -> std::string
{
  auto j = config_to_json(config);
  j.erase("blocklist_path");
  return hex64(fnv1a64(j.dump()));
}

}  // namespace capforge
