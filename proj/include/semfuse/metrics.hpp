#pragma once

#include "semfuse/backend.hpp"
#include "semfuse/frame_io.hpp"
#include "semfuse/scene_graph.hpp"
#include "semfuse/semantic_map.hpp"
#include "semfuse/sim.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <string>
#include <vector>

namespace semfuse {

// Ground-truth classes are entity ids; 0 is the reject class.
using ClassId = std::uint32_t;
inline constexpr ClassId kReject = 0;

enum class MatchMode { exact, oracle, llm };

MatchMode parse_match_mode(const std::string& text);
std::string_view to_string(MatchMode mode);

using Assignment = std::map<LabelId, ClassId>;

// Tag string equality, case-insensitive and ignoring surrounding blanks.
Assignment match_exact(const std::map<LabelId, std::string>& tags,
                       const std::map<ClassId, std::string>& classes);

// (predicted label, gt class) -> overlap count. Each label takes the class it
// overlaps most (ties toward the lower class id).
using OverlapCounts = std::map<std::pair<LabelId, ClassId>, std::size_t>;
Assignment match_oracle(const OverlapCounts& overlaps);

// One backend call mapping every tag to a class name or to reject.
Assignment match_llm(const std::map<LabelId, std::string>& tags,
                     const std::map<ClassId, std::string>& classes, InferenceBackend& backend);

class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(std::vector<ClassId> classes);

  // `gt` must be a listed class; `pred` a listed class or kReject.
  void add(ClassId gt, ClassId pred, std::size_t count = 1);

  const std::vector<ClassId>& classes() const { return classes_; }
  // Row gt, column pred; index 0 is the reject class.
  std::size_t at(ClassId gt, ClassId pred) const;
  std::size_t total() const { return total_; }

 private:
  std::size_t slot(ClassId c) const;

  std::vector<ClassId> classes_;  // ascending, without kReject
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

struct ClassScore {
  ClassId id = kReject;
  double iou = 0.0;
  double recall = 0.0;
  std::size_t support = 0;  // gt count
};

struct SegmentationScores {
  double miou = 0.0;
  double fmiou = 0.0;
  double macc = 0.0;
  std::vector<ClassScore> classes;  // classes present in gt only
};

// Throws InputError when nothing was accumulated.
SegmentationScores segmentation_metrics(const ConfusionAccumulator& confusion);

// 2D: pixels with gt 0 are skipped.
SegmentationScores segmentation_metrics(const LabelImage& predicted, const IdImage& gt,
                                        const Assignment& assignment);

// Canonical relation with orientation: "under" becomes a reversed "on",
// synonyms collapse, unknown phrases pass through lowercased.
struct CanonicalRelation {
  std::string relation;
  bool reversed = false;
  bool symmetric = false;
};
CanonicalRelation canonical_relation(const std::string& text);

// Fraction of gt triplets found among the predicted ones. Names compare
// case-insensitively.
double relation_recall(const std::vector<Relation>& predicted, const std::vector<Relation>& gt);

// Graph edges expressed as class-name triplets under `assignment`. Edges
// with a rejected endpoint are dropped.
std::vector<Relation> graph_relations(const SceneGraph& graph, const Assignment& assignment,
                                      const std::map<ClassId, std::string>& classes);

struct GtPoint {
  Vec3 position = Vec3::Zero();
  ClassId cls = kReject;
};

// Ground-truth masks of a simulator directory back-projected at `stride`,
// one point per `voxel` cell (first seen wins).
std::vector<GtPoint> gt_points(const std::filesystem::path& frames, int stride = 4,
                               double voxel = 0.02);

// Predicted label of each gt point: nearest labeled primitive within radius,
// 0 when uncovered.
std::vector<LabelId> transfer_labels(const SemanticMap& map, const std::vector<GtPoint>& points,
                                     double radius);

struct EvalReport {
  MatchMode mode = MatchMode::exact;
  Assignment assignment;
  SegmentationScores scores;
  std::size_t points = 0;
  std::size_t uncovered = 0;
  double relation_recall = 0.0;
  std::size_t predicted_labels = 0;
  std::map<ClassId, std::string> class_names;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct EvalInputs {
  const SemanticMap* map = nullptr;
  const SceneGraph* graph = nullptr;
  const SyntheticScene* scene = nullptr;
  std::filesystem::path frames;  // simulator output with gt/
  double search_radius = 0.1;
  int stride = 4;
  double voxel = 0.02;
  InferenceBackend* backend = nullptr;  // llm mode only
};

EvalReport evaluate(const EvalInputs& inputs, MatchMode mode);

// Share of primitives whose assigned class equals the entity at their
// position (primitives not on any entity surface are skipped).
double primitive_accuracy(const SemanticMap& map, const SyntheticScene& scene,
                          const Assignment& assignment, double tolerance = 1e-3);

}  // namespace semfuse
