#pragma once

#include "semfuse/semantic_map.hpp"

#include <vector>

namespace semfuse {

struct RefineConfig {
  double tau_low = 0.3;
  double tau_high = 0.7;
  double search_radius = 0.1;  // r_search, individual refinement
  double link_radius = 0.1;    // cluster adjacency
  double search_cap = 2.0;     // bound on the "nearest outside the cluster" search

  void validate() const;
};

struct SemanticCluster {
  LabelId label = kUnlabeled;
  std::vector<PrimitiveId> members;  // ascending
  double average_confidence = 0.0;
};

// Connected components over labeled primitives linked when they share a
// label and lie strictly closer than `link_radius`. Ordered by smallest
// member id.
std::vector<SemanticCluster> cluster(const SemanticMap& map, double link_radius);

struct ClusterRefineResult {
  std::vector<bool> processed;  // indexed by primitive id
  std::size_t clusters_relabeled = 0;
  std::size_t primitives_relabeled = 0;
  std::size_t search_misses = 0;  // members with no qualifying neighbor inside the cap
};

// Cluster-level pass: labels only, confidences untouched.
ClusterRefineResult refine_clusters(SemanticMap& map, const std::vector<SemanticCluster>& clusters,
                                    const RefineConfig& config);

// Individual pass over primitives outside `processed`, unlabeled ones
// included (they carry confidence 0). Returns the number
// of primitives relabeled (each set to confidence 0.5).
std::size_t refine_individuals(SemanticMap& map, const std::vector<bool>& processed,
                               const RefineConfig& config);

struct RefineReport {
  std::size_t clusters = 0;
  std::size_t clusters_relabeled = 0;
  std::size_t cluster_primitives_relabeled = 0;
  std::size_t individuals_relabeled = 0;
  std::size_t search_misses = 0;
};

// One full pass: cluster, refine_clusters, refine_individuals.
RefineReport global_refine(SemanticMap& map, const RefineConfig& config);

}  // namespace semfuse
