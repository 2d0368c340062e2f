#include "semfuse/pipeline.hpp"

#include "semfuse/frame_io.hpp"
#include "semfuse/ingest.hpp"
#include "semfuse/local_opt.hpp"
#include "semfuse/render.hpp"
#include "semfuse/snapshot.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <numbers>

namespace semfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every segment starts a new label; used when association is disabled.
AssociationReport all_novel(const std::vector<PrimitiveGroup>& groups) {
  AssociationReport report;
  for (const auto& g : groups) {
    SegmentAssociation s;
    s.segment = g.segment;
    s.primitive_count = g.primitives.size();
    s.kind = AssociationCase::novel;
    report.segments.push_back(s);
  }
  std::sort(report.segments.begin(), report.segments.end(),
            [](const auto& a, const auto& b) { return a.segment < b.segment; });
  return report;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, CameraIntrinsics intrinsics, InferenceBackend* backend,
                   PromptSet prompts)
    : config_(std::move(config)),
      intrinsics_(intrinsics),
      backend_(backend),
      prompts_(std::move(prompts)),
      tracker_(config_.graph.max_views, config_.graph.crop_margin) {
  config_.validate();
  intrinsics_.validate();
}

template <typename F>
auto Pipeline::timed(const std::string& stage, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  struct Stop {
    StageTiming& t;
    std::chrono::steady_clock::time_point start;
    ~Stop() {
      t.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ++t.calls;
    }
  } stop{timings_[stage], start};
  return f();
}

void Pipeline::process(const KeyframeRecord& keyframe) {
  keyframe.validate(intrinsics_);
  const int n = ++keyframes_;

  auto groups = timed("ingest", [&] { return init_primitives(keyframe, intrinsics_, config_.fusion); });
  std::map<SegmentId, double> c_sam;
  std::size_t new_primitives = 0;
  for (const auto& g : groups) {
    c_sam[g.segment] = g.confidence;
    new_primitives += g.primitives.size();
  }

  const AssociationReport report = timed("associate", [&] {
    return config_.association ? associate(map_, groups, config_.local) : all_novel(groups);
  });
  std::size_t merged = 0, novel = 0, invalid = 0;
  for (const auto& s : report.segments) {
    if (s.kind == AssociationCase::merged) ++merged;
    if (s.kind == AssociationCase::novel) ++novel;
    if (s.kind == AssociationCase::invalid) ++invalid;
  }
  timed("confidence", [&] {
    update_confidence(map_, report, c_sam);
    return 0;
  });
  timed("apply_labels", [&] { return apply_labels(map_, std::move(groups), report); });
  events_.push_back({{"keyframe", n},
                     {"frame", keyframe.index},
                     {"event", "ingest"},
                     {"segments", report.segments.size()},
                     {"merged", merged},
                     {"novel", novel},
                     {"invalid", invalid},
                     {"new_primitives", new_primitives},
                     {"primitives", map_.size()}});

  if (backend_ != nullptr) {
    timed("view_tracking", [&] {
      const RenderedFrame r = render(map_, keyframe.pose, intrinsics_, config_.render);
      tracker_.observe(n, keyframe.color, r.labels);
      return 0;
    });
  }

  if (refine_tick(keyframe.pose)) {
    const auto do_refine = [&] {
      if (!config_.global_refine) return;
      const RefineReport r = timed("global_refine", [&] { return global_refine(map_, config_.refine); });
      events_.push_back({{"keyframe", n},
                         {"event", "refine"},
                         {"clusters", r.clusters},
                         {"clusters_relabeled", r.clusters_relabeled},
                         {"cluster_primitives_relabeled", r.cluster_primitives_relabeled},
                         {"individuals_relabeled", r.individuals_relabeled},
                         {"search_misses", r.search_misses}});
    };
    const auto do_longterm = [&] {
      if (!config_.longterm) return;
      const LongtermReport r = timed("longterm", [&] {
        return longterm_update(map_, buffer_, intrinsics_,
                               LongtermConfig{config_.search_radius(), config_.render});
      });
      events_.push_back({{"keyframe", n},
                         {"event", "longterm"},
                         {"entries", r.entries},
                         {"raised", r.raised},
                         {"lowered", r.lowered}});
    };
    if (config_.longterm_first) {
      do_longterm();
      do_refine();
    } else {
      do_refine();
      do_longterm();
    }
  }

  if (config_.longterm) {
    const Admission a = timed("admission", [&] {
      return buffer_.admit(keyframe, intrinsics_, config_.tau_long, config_.search_radius());
    });
    events_.push_back({{"keyframe", n},
                       {"event", "admission"},
                       {"admitted", a.admitted},
                       {"r_in", a.r_in},
                       {"r_overlap", a.r_overlap},
                       {"buffer_size", buffer_.size()}});
  }

  if (backend_ != nullptr) {
    if (n == config_.graph_init) {
      update_graph_now("graph_init");
    } else if (n > config_.graph_init && (n - config_.graph_init) % config_.graph_interval == 0) {
      update_graph_now("graph_update");
    }
  }
}

bool Pipeline::refine_tick(const Pose& pose) {
  if (last_pose_) {
    moved_ += pose.distance_to(*last_pose_);
    turned_ += pose.angle_to(*last_pose_);
  }
  last_pose_ = pose;
  if (config_.refine_trigger == "keyframes") return keyframes_ % config_.refine_interval == 0;
  const double deg = turned_ * 180.0 / std::numbers::pi;
  const bool fire = (config_.refine_motion_translation > 0.0 && moved_ >= config_.refine_motion_translation) ||
                    (config_.refine_motion_rotation_deg > 0.0 && deg >= config_.refine_motion_rotation_deg);
  if (fire) moved_ = turned_ = 0.0;
  return fire;
}

void Pipeline::update_graph_now(const char* event) {
  const GraphUpdateReport r = timed("scene_graph", [&] {
    return update_graph(graph_, map_, tracker_, *backend_, prompts_, config_.graph);
  });
  last_graph_event_ = keyframes_;
  if (r.backend_failures > 0) {
    spdlog::warn("scene graph degraded: {} backend call(s) failed at keyframe {}",
                 r.backend_failures, keyframes_);
  }
  events_.push_back({{"keyframe", keyframes_},
                     {"event", event},
                     {"updated", r.updated.size()},
                     {"added", r.added},
                     {"removed", r.removed},
                     {"edges_added", r.edges_added},
                     {"edges_removed", r.edges_removed},
                     {"backend_failures", r.backend_failures},
                     {"nodes", graph_.nodes.size()},
                     {"edges", graph_.edges.size()}});
}

void Pipeline::finish() {
  if (backend_ == nullptr || keyframes_ == 0 || last_graph_event_ == keyframes_) return;
  update_graph_now(graph_.nodes.empty() ? "graph_init" : "graph_update");
}

namespace {

template <typename Sink>
std::size_t drive(const fs::path& frames, const PipelineConfig& config, Pipeline& pipeline,
                  Sink&& on_keyframe) {
  const FrameSequence seq = FrameSequence::open(frames);
  std::optional<Pose> last;
  for (const auto& entry : seq.frames()) {
    if (!select_keyframe(entry.pose, last, config.fusion)) continue;
    last = entry.pose;
    KeyframeRecord kf;
    try {
      kf = seq.load(entry.index, config.fusion.overlap_threshold);
      pipeline.process(kf);
    } catch (const InputError& e) {
      throw InputError("frame " + std::to_string(entry.index) + ": " + e.what());
    }
    on_keyframe(entry.index);
  }
  pipeline.finish();
  return seq.frames().size();
}

}  // namespace

Pipeline run_in_memory(const fs::path& frames, const PipelineConfig& config,
                       InferenceBackend* backend, const PromptSet& prompts) {
  const FrameSequence seq = FrameSequence::open(frames);
  Pipeline pipeline(config, seq.intrinsics(), backend, prompts);
  drive(frames, config, pipeline, [](int) {});
  return pipeline;
}

RunSummary run_pipeline(const fs::path& frames, const PipelineConfig& config,
                        InferenceBackend* backend, const PromptSet& prompts, const fs::path& out) {
  const auto start = std::chrono::steady_clock::now();
  const FrameSequence seq = FrameSequence::open(frames);
  Pipeline pipeline(config, seq.intrinsics(), backend, prompts);
  RunSummary summary;
  summary.frames = drive(frames, config, pipeline, [&](int index) {
    spdlog::debug("keyframe {} (frame {}): {} primitives", pipeline.keyframes(), index,
                  pipeline.map().size());
  });
  summary.keyframes = pipeline.keyframes();
  summary.primitives = pipeline.map().size();

  fs::create_directories(out);
  write_snapshot(out, pipeline.map(), pipeline.graph(), pipeline.buffer(), pipeline.intrinsics(),
                 config.to_json());
  {
    std::ofstream ev(out / "events.jsonl", std::ios::binary);
    for (const auto& e : pipeline.events()) ev << e.dump() << "\n";
  }
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json stages = json::object();
  for (const auto& [stage, t] : pipeline.timings()) {
    stages[stage] = {{"seconds", t.seconds}, {"calls", t.calls}};
    spdlog::info("stage {:<14} {:>9.3f} s over {} call(s)", stage, t.seconds, t.calls);
  }
  write_json(out / "timings.json", {{"total_seconds", summary.seconds},
                                    {"keyframes", summary.keyframes},
                                    {"primitives", summary.primitives},
                                    {"stages", stages}});
  spdlog::info("run: {} frames, {} keyframes, {} primitives, {:.2f} s", summary.frames,
               summary.keyframes, summary.primitives, summary.seconds);
  return summary;
}

}  // namespace semfuse
