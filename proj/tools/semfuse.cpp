#include "semfuse/config.hpp"
#include "semfuse/frame_io.hpp"
#include "semfuse/metrics.hpp"
#include "semfuse/pipeline.hpp"
#include "semfuse/png_io.hpp"
#include "semfuse/render.hpp"
#include "semfuse/sim.hpp"
#include "semfuse/snapshot.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace semfuse;

namespace {

std::vector<NamedColor> palette_for(const fs::path& dir) {
  const fs::path scene = dir / "scene.json";
  if (!fs::exists(scene)) return {};
  return SyntheticScene::from_json(read_json(scene)).palette();
}

std::unique_ptr<InferenceBackend> make_backend(const std::string& kind, const PipelineConfig& config,
                                               const fs::path& frames, const PromptSet& prompts) {
  if (kind == "mock") {
    auto palette = palette_for(frames);
    if (palette.empty()) spdlog::warn("no scene.json next to the frames; mock captions will be empty");
    return std::make_unique<MockBackend>(std::move(palette));
  }
  HttpBackendConfig http = HttpBackendConfig::from_environment();
  if (!config.llm_url.empty()) http.url = config.llm_url;
  if (!config.llm_model.empty()) http.model = config.llm_model;
  if (!config.score_url.empty()) http.score_url = config.score_url;
  if (http.url.empty()) throw InputError("http backend needs SEMFUSE_LLM_URL or llm_url");
  return make_http_backend(http, prompts);
}

void write_render(const MapSnapshot& snap, const Pose& pose, const fs::path& out) {
  fs::create_directories(out);
  const RenderedFrame r = render(snap.map, pose, snap.intrinsics);
  RgbImage color(r.color.width(), r.color.height());
  DepthImage depth(r.depth.width(), r.depth.height(), 0.0);
  Gray16Image labels(r.labels.width(), r.labels.height());
  for (std::size_t i = 0; i < color.size(); ++i) {
    const Vec3 c = (r.color[i] * 255.0).cwiseMax(0.0).cwiseMin(255.0);
    color[i] = {static_cast<std::uint8_t>(std::lround(c.x())),
                static_cast<std::uint8_t>(std::lround(c.y())),
                static_cast<std::uint8_t>(std::lround(c.z()))};
    if (r.alpha[i] >= 0.5) depth[i] = r.depth[i] / r.alpha[i];
    if (r.labels[i] > 0xffff) throw InputError("label id does not fit a 16-bit image");
    labels[i] = static_cast<std::uint16_t>(r.labels[i]);
  }
  write_rgb_png(out / "color.png", color);
  write_depth_mm(out / "depth.png", depth);
  write_gray16_png(out / "labels.png", labels);
}

EvalReport evaluate_snapshot(const fs::path& snapshot, const fs::path& gt, const std::string& mode,
                             double r_search) {
  const MapSnapshot snap = load_snapshot(snapshot);
  const SyntheticScene scene = SyntheticScene::from_json(read_json(gt / "scene.json"));
  if (r_search <= 0.0) r_search = snap.config.value("r_search", 0.1);
  EvalInputs in;
  in.map = &snap.map;
  in.graph = &snap.graph;
  in.scene = &scene;
  in.frames = gt;
  in.search_radius = r_search;
  std::unique_ptr<InferenceBackend> backend;
  const MatchMode m = parse_match_mode(mode);
  if (m == MatchMode::llm) {
    PipelineConfig cfg;
    backend = make_backend(snap.config.value("backend", std::string("mock")), cfg, gt,
                           PromptSet::builtin());
    in.backend = backend.get();
  }
  return evaluate(in, m);
}

void write_report(const EvalReport& report, const std::string& json_out, const std::string& csv_out) {
  if (json_out.empty()) {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    write_json(json_out, report.to_json());
  }
  if (!csv_out.empty()) std::ofstream(csv_out) << report.to_csv();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semfuse: incremental semantic mapping with scene graphs"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // run
  auto* run = app.add_subcommand("run", "map a frame directory");
  std::string frames, config_path, out, backend_kind, prompts_dir;
  std::vector<std::string> overrides;
  run->add_option("--frames", frames, "frame directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--config", config_path, "config JSON")->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--backend", backend_kind, "mock | http")->check(CLI::IsMember({"mock", "http"}));
  run->add_option("--prompts", prompts_dir, "directory of prompt templates")
      ->check(CLI::ExistingDirectory);
  run->add_option("--set", overrides, "config override key=value (repeatable)");
  bool no_graph = false;
  run->add_flag("--no-graph", no_graph, "skip the scene graph");

  // simulate
  auto* sim = app.add_subcommand("simulate", "render a synthetic frame directory");
  std::string spec_path, noise_path;
  std::uint64_t seed = 0;
  sim->add_option("--spec", spec_path, "scene spec JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--noise", noise_path, "noise spec JSON")->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "seed");
  sim->add_option("--out", out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "score a snapshot against simulator ground truth");
  std::string snapshot, gt, mode = "exact", report_out, csv_out;
  double r_search = 0.0;
  eval->add_option("--snapshot", snapshot, "snapshot directory")->required();
  eval->add_option("--gt", gt, "simulator output directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--mode", mode, "exact | oracle | llm")
      ->check(CLI::IsMember({"exact", "oracle", "llm"}));
  eval->add_option("--out", report_out, "report JSON (stdout when omitted)");
  eval->add_option("--csv", csv_out, "per-class CSV");
  eval->add_option("--r-search", r_search, "transfer radius (default: snapshot config)");

  // export
  auto* exp = app.add_subcommand("export", "write an artifact from a snapshot");
  std::string what, pose_text;
  exp->add_option("--snapshot", snapshot, "snapshot directory")->required();
  exp->add_option("what", what, "map-ply | graph-json | render | report")
      ->required()
      ->check(CLI::IsMember({"map-ply", "graph-json", "render", "report"}));
  exp->add_option("--out", out, "output file or directory")->required();
  exp->add_option("--pose", pose_text, "\"tx ty tz qx qy qz qw\" (render)");
  exp->add_option("--gt", gt, "simulator output directory (report)");
  exp->add_option("--mode", mode, "exact | oracle | llm (report)");

  // render
  auto* rnd = app.add_subcommand("render", "render color, depth and labels at a pose");
  rnd->add_option("--snapshot", snapshot, "snapshot directory")->required();
  rnd->add_option("--pose", pose_text, "\"tx ty tz qx qy qz qw\"")->required();
  rnd->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*run) {
      PipelineConfig config = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
      config.apply_overrides(overrides);
      if (!backend_kind.empty()) config.backend = backend_kind;
      const PromptSet prompts = prompts_dir.empty() ? PromptSet::builtin() : PromptSet::load(prompts_dir);
      std::unique_ptr<InferenceBackend> backend;
      if (!no_graph) backend = make_backend(config.backend, config, frames, prompts);
      run_pipeline(frames, config, backend.get(), prompts, out);
    } else if (*sim) {
      const SceneSpec spec = SceneSpec::load(spec_path);
      const NoiseSpec noise = noise_path.empty() ? NoiseSpec{} : NoiseSpec::load(noise_path);
      const SyntheticScene scene = generate(seed, spec);
      render_frames(scene, noise, seed, out);
      spdlog::info("simulate: {} entities, {} relations, {} frames -> {}", scene.entities.size(),
                   scene.relations.size(), scene.trajectory.size(), out);
    } else if (*eval) {
      write_report(evaluate_snapshot(snapshot, gt, mode, r_search), report_out, csv_out);
    } else if (*exp) {
      if (what == "map-ply") {
        write_map_ply(out, load_snapshot(snapshot).map);
      } else if (what == "graph-json") {
        write_json(out, load_snapshot(snapshot).graph.to_json());
      } else if (what == "render") {
        if (pose_text.empty()) throw InputError("export render needs --pose");
        write_render(load_snapshot(snapshot), parse_pose(pose_text), out);
      } else {
        if (gt.empty()) throw InputError("export report needs --gt");
        write_report(evaluate_snapshot(snapshot, gt, mode, 0.0), out, "");
      }
    } else if (*rnd) {
      write_render(load_snapshot(snapshot), parse_pose(pose_text), out);
    }
  } catch (const InputError& e) {
    spdlog::error("input error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
