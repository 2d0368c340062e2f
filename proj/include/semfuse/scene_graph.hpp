#pragma once

#include "semfuse/backend.hpp"
#include "semfuse/prompts.hpp"
#include "semfuse/semantic_map.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <set>
#include <utility>
#include <vector>

namespace semfuse {

struct GraphConfig {
  double theta_e = 0.1;
  double tau_e = 0.2;
  double tau_update = 0.3;
  std::size_t min_entity_primitives = 10;  // smaller labels are not entities
  std::size_t max_views = 3;
  double crop_margin = 0.2;  // total growth of the crop box, split over both sides
};

// Keeps, per label, the masked views with the largest projected area from
// distinct keyframes, plus the context crop of each kept view.
class ViewTracker {
 public:
  explicit ViewTracker(std::size_t max_views = 3, double crop_margin = 0.2)
      : max_views_(max_views), crop_margin_(crop_margin) {}

  // `labels` is the map rendered at the keyframe pose, `color` the captured
  // image. Call once per keyframe.
  void observe(int keyframe, const RgbImage& color, const LabelImage& labels);

  // Empty `masked` when the label was never rendered.
  EntityViews views(LabelId label) const;

  // (keyframe, area) of the kept views, descending area.
  std::vector<std::pair<int, std::size_t>> summary(LabelId label) const;

 private:
  struct Kept {
    ViewImage masked;
    ViewImage crop;
  };

  std::size_t max_views_;
  double crop_margin_;
  std::map<LabelId, std::vector<Kept>> kept_;
};

struct GraphNode {
  LabelId id = kUnlabeled;
  std::string tag;
  std::string caption;
  Vec3 centroid = Vec3::Zero();
  double confidence = 0.0;
  std::vector<std::pair<int, std::size_t>> views;  // (keyframe, area)
};

struct GraphEdge {
  LabelId src = kUnlabeled;
  LabelId dst = kUnlabeled;
  std::string relation;
  Vec3 vector = Vec3::Zero();  // dst centroid - src centroid
};

using EdgeKey = std::pair<LabelId, LabelId>;  // (lower id, higher id)

struct SceneGraph {
  std::map<LabelId, GraphNode> nodes;
  std::map<EdgeKey, GraphEdge> edges;

  nlohmann::json to_json() const;
  static SceneGraph from_json(const nlohmann::json& j);
};

struct EntityCloud {
  LabelId label = kUnlabeled;
  std::vector<Vec3> points;
  Vec3 centroid = Vec3::Zero();
  Bounds bounds;  // exact
  Bounds extent;  // per-axis 2nd to 98th percentile, robust to stray labels
};

// Positions grouped by label (label 0 excluded), keeping labels with at
// least `min_primitives` primitives.
std::map<LabelId, EntityCloud> entity_clouds(const SemanticMap& map, std::size_t min_primitives);

// |P_{a->b}| / |a| where P_{a->b} holds the points of a with a point of b
// strictly closer than theta.
double proximity_fraction(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double theta);

struct ProximityPair {
  LabelId a = kUnlabeled;  // a < b
  LabelId b = kUnlabeled;
  double ratio = 0.0;  // R_ab
};

// Pairs with R_ab > tau_e. With `focus`, only pairs touching a focus label
// are evaluated. Ascending by (a, b).
std::vector<ProximityPair> find_edges(const std::map<LabelId, EntityCloud>& clouds, double theta_e,
                                      double tau_e, const std::set<LabelId>* focus = nullptr);

struct GraphUpdateReport {
  std::set<LabelId> updated;  // the update set
  std::size_t added = 0;
  std::size_t removed = 0;
  std::size_t edges_added = 0;
  std::size_t edges_removed = 0;
  std::size_t backend_failures = 0;
};

// Selective update. On an empty graph this is the initialization: every
// entity with views becomes a node. Nodes outside the update set are left
// untouched, and so are edges between two such nodes.
GraphUpdateReport update_graph(SceneGraph& graph, const SemanticMap& map,
                               const ViewTracker& tracker, InferenceBackend& backend,
                               const PromptSet& prompts, const GraphConfig& config);

}  // namespace semfuse
