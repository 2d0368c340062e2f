#pragma once

#include "semfuse/ingest.hpp"
#include "semfuse/semantic_map.hpp"

#include <map>
#include <string_view>
#include <vector>

namespace semfuse {

struct LocalOptConfig {
  std::size_t k = 5;
  double search_radius = 0.1;  // r_search
  double tau_valid = 0.25;
  double tau_p = 0.15;
};

enum class AssociationCase { invalid, merged, novel };

std::string_view to_string(AssociationCase c);

struct SegmentAssociation {
  SegmentId segment = 0;
  std::size_t primitive_count = 0;
  std::size_t c1 = 0;
  std::size_t c2 = 0;
  double r = 0.0;
  double p = 0.0;
  LabelId dominant = kUnlabeled;  // l*_m, 0 when nothing matched
  AssociationCase kind = AssociationCase::novel;
  // Scene primitives returned by the KNN queries of this segment, ascending
  // id, each listed once.
  std::vector<PrimitiveId> matched;
};

struct PrimitiveMatch {
  PrimitiveId primitive = 0;
  SegmentId segment = 0;
  bool agrees = false;  // primitive label == l*_m
};

struct AssociationReport {
  std::vector<SegmentAssociation> segments;  // ascending segment id
  std::vector<PrimitiveMatch> matches;       // grouped by segment, ascending id within

  const SegmentAssociation* find(SegmentId segment) const;
};

// Majority label among neighbors (ties toward the lowest label); 0 for an
// empty list.
LabelId majority_label(const std::vector<LabelId>& labels);

AssociationReport associate(const SemanticMap& map, const std::vector<PrimitiveGroup>& groups,
                            const LocalOptConfig& config);

struct AppliedLabel {
  SegmentId segment = 0;
  LabelId label = kUnlabeled;
  PrimitiveId first = 0;
  std::size_t count = 0;
};

// Relabels each group per its case and inserts every new primitive into
// the map in one batch.
std::vector<AppliedLabel> apply_labels(SemanticMap& map, std::vector<PrimitiveGroup> groups,
                                       const AssociationReport& report);

// Eq. 5 on scene primitives matched by merged segments, sequentially in
// ascending segment id. `c_sam` maps segment id to its rescaled confidence.
void update_confidence(SemanticMap& map, const AssociationReport& report,
                       const std::map<SegmentId, double>& c_sam);

}  // namespace semfuse
