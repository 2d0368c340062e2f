#pragma once

#include "semfuse/config.hpp"
#include "semfuse/memory_buffer.hpp"
#include "semfuse/prompts.hpp"
#include "semfuse/scene_graph.hpp"
#include "semfuse/semantic_map.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace semfuse {

struct StageTiming {
  double seconds = 0.0;
  std::size_t calls = 0;
};

// The incremental mapping loop over keyframes. Keyframes are numbered from
// 1 in arrival order; refinement and long-term updates run when that number
// is a multiple of refine_interval (or on accumulated camera motion, see
// PipelineConfig::refine_trigger), the graph is initialized at graph_init
// and updated every graph_interval keyframes after that.
class Pipeline {
 public:
  // `backend` may be null, which disables the scene graph.
  Pipeline(PipelineConfig config, CameraIntrinsics intrinsics, InferenceBackend* backend,
           PromptSet prompts);

  void process(const KeyframeRecord& keyframe);
  // Final graph update when the last keyframe was not a graph event.
  void finish();

  const SemanticMap& map() const { return map_; }
  const SceneGraph& graph() const { return graph_; }
  const MemoryBuffer& buffer() const { return buffer_; }
  const ViewTracker& tracker() const { return tracker_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const PipelineConfig& config() const { return config_; }
  int keyframes() const { return keyframes_; }
  // Deterministic event log, one object per event.
  const std::vector<nlohmann::json>& events() const { return events_; }
  const std::map<std::string, StageTiming>& timings() const { return timings_; }

 private:
  template <typename F>
  auto timed(const std::string& stage, F&& f);
  void update_graph_now(const char* event);
  bool refine_tick(const Pose& pose);

  PipelineConfig config_;
  CameraIntrinsics intrinsics_;
  InferenceBackend* backend_;
  PromptSet prompts_;
  SemanticMap map_;
  SceneGraph graph_;
  MemoryBuffer buffer_;
  ViewTracker tracker_;
  int keyframes_ = 0;
  int last_graph_event_ = 0;
  std::optional<Pose> last_pose_;
  double moved_ = 0.0;    // meters since the last tick
  double turned_ = 0.0;   // radians since the last tick
  std::vector<nlohmann::json> events_;
  std::map<std::string, StageTiming> timings_;
};

struct RunSummary {
  std::size_t frames = 0;
  int keyframes = 0;
  std::size_t primitives = 0;
  double seconds = 0.0;
};

// Reads the frame directory, runs the loop on the selected keyframes and
// writes the snapshot plus events.jsonl and timings.json into `out`.
// Throws InputError naming the frame on malformed input.
RunSummary run_pipeline(const std::filesystem::path& frames, const PipelineConfig& config,
                        InferenceBackend* backend, const PromptSet& prompts,
                        const std::filesystem::path& out);

// Same loop without writing anything; returns the finished pipeline.
Pipeline run_in_memory(const std::filesystem::path& frames, const PipelineConfig& config,
                       InferenceBackend* backend, const PromptSet& prompts);

}  // namespace semfuse
