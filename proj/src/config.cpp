#include "semfuse/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace semfuse {

using nlohmann::json;

void PipelineConfig::set_search_radius(double r) {
  local.search_radius = r;
  refine.search_radius = r;
}

void PipelineConfig::validate() const {
  fusion.validate();
  refine.validate();
  if (!(local.search_radius > 0.0) || local.k == 0) {
    throw InputError("config: r_search must be positive and knn_k at least 1");
  }
  if (!(local.tau_valid >= 0.0 && local.tau_valid <= 1.0) ||
      !(local.tau_p >= 0.0 && local.tau_p <= 1.0)) {
    throw InputError("config: tau_valid and tau_p must lie in [0, 1]");
  }
  if (!(tau_long >= 0.0 && tau_long <= 1.0)) throw InputError("config: tau_long must lie in [0, 1]");
  if (refine_interval < 1 || graph_interval < 1 || graph_init < 1) {
    throw InputError("config: intervals must be at least 1");
  }
  if (refine_trigger != "keyframes" && refine_trigger != "motion") {
    throw InputError("config: refine_trigger must be keyframes or motion");
  }
  if (!(refine_motion_translation >= 0.0) || !(refine_motion_rotation_deg >= 0.0)) {
    throw InputError("config: refine motion thresholds must be nonnegative");
  }
  if (refine_trigger == "motion" && refine_motion_translation == 0.0 && refine_motion_rotation_deg == 0.0) {
    throw InputError("config: refine_trigger=motion needs refine_motion_translation or refine_motion_rotation_deg");
  }
  if (!(graph.theta_e > 0.0) || !(graph.tau_e >= 0.0 && graph.tau_e <= 1.0) ||
      !(graph.tau_update >= 0.0 && graph.tau_update <= 1.0)) {
    throw InputError("config: bad scene graph thresholds");
  }
  if (graph.max_views == 0 || !(graph.crop_margin >= 0.0)) {
    throw InputError("config: bad view settings");
  }
  if (render.tile_size < 1 || !(render.min_transmittance >= 0.0 && render.min_transmittance < 1.0) ||
      !(render.epsilon > 0.0)) {
    throw InputError("config: bad render settings");
  }
  if (backend != "mock" && backend != "http") {
    throw InputError("config: backend must be mock or http");
  }
}

json PipelineConfig::to_json() const {
  return {
      {"tau_high", refine.tau_high},
      {"tau_low", refine.tau_low},
      {"tau_m", fusion.overlap_threshold},
      {"tau_valid", local.tau_valid},
      {"tau_p", local.tau_p},
      {"r_search", local.search_radius},
      {"tau_long", tau_long},
      {"theta_e", graph.theta_e},
      {"tau_e", graph.tau_e},
      {"tau_update", graph.tau_update},
      {"refine_interval", refine_interval},
      {"refine_trigger", refine_trigger},
      {"refine_motion_translation", refine_motion_translation},
      {"refine_motion_rotation_deg", refine_motion_rotation_deg},
      {"graph_interval", graph_interval},
      {"graph_init", graph_init},
      {"knn_k", local.k},
      {"epsilon", render.epsilon},
      {"keyframe_translation", fusion.keyframe_translation},
      {"keyframe_rotation_deg", fusion.keyframe_rotation_deg},
      {"stride", fusion.stride},
      {"opacity", fusion.opacity},
      {"scale_multiplier", fusion.scale_multiplier},
      {"ssim_lambda", ssim_lambda},
      {"lambda_color", lambda_color},
      {"lambda_depth", lambda_depth},
      {"search_cap", refine.search_cap},
      {"link_radius", refine.link_radius},
      {"min_entity_primitives", graph.min_entity_primitives},
      {"max_views", graph.max_views},
      {"crop_margin", graph.crop_margin},
      {"tile_size", render.tile_size},
      {"min_transmittance", render.min_transmittance},
      {"association", association},
      {"global_refine", global_refine},
      {"longterm", longterm},
      {"longterm_first", longterm_first},
      {"backend", backend},
      {"llm_url", llm_url},
      {"llm_model", llm_model},
      {"score_url", score_url},
  };
}

namespace {

void set_key(PipelineConfig& c, const std::string& key, const json& v) {
  if (key == "tau_high") c.refine.tau_high = v.get<double>();
  else if (key == "tau_low") c.refine.tau_low = v.get<double>();
  else if (key == "tau_m") c.fusion.overlap_threshold = v.get<double>();
  else if (key == "tau_valid") c.local.tau_valid = v.get<double>();
  else if (key == "tau_p") c.local.tau_p = v.get<double>();
  else if (key == "r_search") c.set_search_radius(v.get<double>());
  else if (key == "tau_long") c.tau_long = v.get<double>();
  else if (key == "theta_e") c.graph.theta_e = v.get<double>();
  else if (key == "tau_e") c.graph.tau_e = v.get<double>();
  else if (key == "tau_update") c.graph.tau_update = v.get<double>();
  else if (key == "refine_interval") c.refine_interval = v.get<int>();
  else if (key == "refine_trigger") c.refine_trigger = v.get<std::string>();
  else if (key == "refine_motion_translation") c.refine_motion_translation = v.get<double>();
  else if (key == "refine_motion_rotation_deg") c.refine_motion_rotation_deg = v.get<double>();
  else if (key == "graph_interval") c.graph_interval = v.get<int>();
  else if (key == "graph_init") c.graph_init = v.get<int>();
  else if (key == "knn_k") c.local.k = v.get<std::size_t>();
  else if (key == "epsilon") c.render.epsilon = v.get<double>();
  else if (key == "keyframe_translation") c.fusion.keyframe_translation = v.get<double>();
  else if (key == "keyframe_rotation_deg") c.fusion.keyframe_rotation_deg = v.get<double>();
  else if (key == "stride") c.fusion.stride = v.get<int>();
  else if (key == "opacity") c.fusion.opacity = v.get<double>();
  else if (key == "scale_multiplier") c.fusion.scale_multiplier = v.get<double>();
  else if (key == "ssim_lambda") c.ssim_lambda = v.get<double>();
  else if (key == "lambda_color") c.lambda_color = v.get<double>();
  else if (key == "lambda_depth") c.lambda_depth = v.get<double>();
  else if (key == "search_cap") c.refine.search_cap = v.get<double>();
  else if (key == "link_radius") c.refine.link_radius = v.get<double>();
  else if (key == "min_entity_primitives") c.graph.min_entity_primitives = v.get<std::size_t>();
  else if (key == "max_views") c.graph.max_views = v.get<std::size_t>();
  else if (key == "crop_margin") c.graph.crop_margin = v.get<double>();
  else if (key == "tile_size") c.render.tile_size = v.get<int>();
  else if (key == "min_transmittance") c.render.min_transmittance = v.get<double>();
  else if (key == "association") c.association = v.get<bool>();
  else if (key == "global_refine") c.global_refine = v.get<bool>();
  else if (key == "longterm") c.longterm = v.get<bool>();
  else if (key == "longterm_first") c.longterm_first = v.get<bool>();
  else if (key == "backend") c.backend = v.get<std::string>();
  else if (key == "llm_url") c.llm_url = v.get<std::string>();
  else if (key == "llm_model") c.llm_model = v.get<std::string>();
  else if (key == "score_url") c.score_url = v.get<std::string>();
  else throw InputError("config: unknown key \"" + key + "\"");
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  PipelineConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      set_key(c, key, value);
    } catch (const json::exception& e) {
      throw InputError("config: bad value for \"" + key + "\": " + e.what());
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void PipelineConfig::apply_override(const std::string& assignment) { apply_overrides({assignment}); }

void PipelineConfig::apply_overrides(const std::vector<std::string>& assignments) {
  PipelineConfig next = *this;
  for (const auto& assignment : assignments) next.set_override(assignment);
  next.validate();
  *this = std::move(next);
}

void PipelineConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InputError("override must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;  // bare strings
  }
  try {
    set_key(*this, key, value);
  } catch (const json::exception& e) {
    throw InputError("bad value for \"" + key + "\": " + e.what());
  }
}

}  // namespace semfuse
