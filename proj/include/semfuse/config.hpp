#pragma once

#include "semfuse/backend.hpp"
#include "semfuse/global_refine.hpp"
#include "semfuse/ingest.hpp"
#include "semfuse/local_opt.hpp"
#include "semfuse/memory_buffer.hpp"
#include "semfuse/scene_graph.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace semfuse {

// Every threshold of the mapping loop. JSON keys are flat (see to_json);
// r_search is shared by association, refinement, long-term update and
// evaluation.
struct PipelineConfig {
  FusionConfig fusion;
  LocalOptConfig local;
  RefineConfig refine;
  GraphConfig graph;
  RenderOptions render;
  double tau_long = 0.5;
  int refine_interval = 6;
  // "keyframes" ticks every refine_interval keyframes. "motion" ticks once the
  // camera path since the last tick exceeds either threshold; there is no
  // default for those, so at least one must be set.
  std::string refine_trigger = "keyframes";
  double refine_motion_translation = 0.0;   // meters, 0 = unused
  double refine_motion_rotation_deg = 0.0;  // degrees, 0 = unused
  int graph_interval = 12;
  int graph_init = 12;

  // Reserved for the photometric loss, which this system does not optimize.
  double ssim_lambda = 0.2;
  double lambda_color = 1.0;
  double lambda_depth = 0.1;

  // Ablation switches.
  bool association = true;
  bool global_refine = true;
  bool longterm = true;
  bool longterm_first = false;

  std::string backend = "mock";  // mock | http
  std::string llm_url;
  std::string llm_model = "gpt-4o";
  std::string score_url;

  double search_radius() const { return local.search_radius; }
  void set_search_radius(double r);

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are an error.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  // Applies "key=value" with the same key names as the JSON form.
  void apply_override(const std::string& assignment);
  // All at once, validated after the last one.
  void apply_overrides(const std::vector<std::string>& assignments);

 private:
  void set_override(const std::string& assignment);
};

}  // namespace semfuse
