#include "semfuse/local_opt.hpp"

#include "semfuse/confidence.hpp"

#include <algorithm>
#include <stdexcept>

namespace semfuse {

std::string_view to_string(AssociationCase c) {
  switch (c) {
    case AssociationCase::invalid:
      return "invalid";
    case AssociationCase::merged:
      return "merged";
    case AssociationCase::novel:
      return "novel";
  }
  return "unknown";
}

const SegmentAssociation* AssociationReport::find(SegmentId segment) const {
  auto it = std::lower_bound(
      segments.begin(), segments.end(), segment,
      [](const SegmentAssociation& a, SegmentId s) { return a.segment < s; });
  if (it == segments.end() || it->segment != segment) return nullptr;
  return &*it;
}

LabelId majority_label(const std::vector<LabelId>& labels) {
  std::map<LabelId, std::size_t> counts;
  for (const LabelId l : labels) ++counts[l];
  LabelId best = kUnlabeled;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

AssociationReport associate(const SemanticMap& map, const std::vector<PrimitiveGroup>& groups,
                            const LocalOptConfig& config) {
  if (config.k < 1) throw std::invalid_argument("associate: k must be >= 1");
  AssociationReport report;
  std::vector<const PrimitiveGroup*> ordered;
  for (const auto& g : groups) ordered.push_back(&g);
  std::sort(ordered.begin(), ordered.end(),
            [](const PrimitiveGroup* a, const PrimitiveGroup* b) { return a->segment < b->segment; });

  std::vector<LabelId> neighbor_labels;
  for (const PrimitiveGroup* group : ordered) {
    SegmentAssociation seg;
    seg.segment = group->segment;
    seg.primitive_count = group->primitives.size();

    std::vector<LabelId> votes;  // l_hat per primitive, 0 = no vote
    votes.reserve(group->primitives.size());
    std::vector<PrimitiveId> matched;
    for (const auto& p : group->primitives) {
      const auto neighbors = map.empty() ? std::vector<Neighbor>{}
                                         : map.knn_query_labeled(p.position, config.k,
                                                                 config.search_radius);
      neighbor_labels.clear();
      for (const auto& n : neighbors) {
        neighbor_labels.push_back(map[n.id].label);
        matched.push_back(n.id);
      }
      votes.push_back(majority_label(neighbor_labels));
    }

    std::map<LabelId, std::size_t> counts;
    for (const LabelId v : votes) {
      if (v != kUnlabeled) ++counts[v];
    }
    // Top two by count, ties toward the lower label.
    for (const auto& [label, count] : counts) {
      if (count > seg.c1) {
        seg.c2 = seg.c1;
        seg.c1 = count;
        seg.dominant = label;
      } else if (count > seg.c2) {
        seg.c2 = count;
      }
    }
    if (seg.c1 == 0) {
      seg.kind = AssociationCase::novel;
    } else {
      seg.r = static_cast<double>(seg.c2) / static_cast<double>(seg.c1);
      seg.p = seg.primitive_count == 0
                  ? 0.0
                  : static_cast<double>(seg.c1) / static_cast<double>(seg.primitive_count);
      if (seg.r >= config.tau_valid) {
        seg.kind = AssociationCase::invalid;
      } else if (seg.p >= config.tau_p) {
        seg.kind = AssociationCase::merged;
      } else {
        seg.kind = AssociationCase::novel;
      }
    }

    std::sort(matched.begin(), matched.end());
    matched.erase(std::unique(matched.begin(), matched.end()), matched.end());
    for (const PrimitiveId id : matched) {
      report.matches.push_back({id, seg.segment, map[id].label == seg.dominant});
    }
    seg.matched = std::move(matched);
    report.segments.push_back(std::move(seg));
  }
  return report;
}

std::vector<AppliedLabel> apply_labels(SemanticMap& map, std::vector<PrimitiveGroup> groups,
                                       const AssociationReport& report) {
  std::sort(groups.begin(), groups.end(),
            [](const PrimitiveGroup& a, const PrimitiveGroup& b) { return a.segment < b.segment; });
  std::vector<AppliedLabel> applied;
  std::vector<GaussianPrimitive> batch;
  PrimitiveId next_id = static_cast<PrimitiveId>(map.size());
  for (auto& group : groups) {
    const SegmentAssociation* seg = report.find(group.segment);
    if (seg == nullptr) {
      throw std::invalid_argument("apply_labels: report does not cover segment " +
                                  std::to_string(group.segment));
    }
    AppliedLabel a;
    a.segment = group.segment;
    switch (seg->kind) {
      case AssociationCase::invalid:
        a.label = kUnlabeled;
        break;
      case AssociationCase::merged:
        a.label = seg->dominant;
        break;
      case AssociationCase::novel:
        a.label = map.labels().issue();
        break;
    }
    a.first = next_id;
    a.count = group.primitives.size();
    next_id += static_cast<PrimitiveId>(a.count);
    for (auto& p : group.primitives) {
      p.label = a.label;
      if (seg->kind == AssociationCase::invalid) p.confidence = 0.0f;
      batch.push_back(p);
    }
    applied.push_back(a);
  }
  map.insert(std::move(batch));
  return applied;
}

void update_confidence(SemanticMap& map, const AssociationReport& report,
                       const std::map<SegmentId, double>& c_sam) {
  for (const auto& seg : report.segments) {
    if (seg.kind != AssociationCase::merged) continue;
    const auto it = c_sam.find(seg.segment);
    const double c = it == c_sam.end() ? 0.0 : it->second;
    const double gain = c * seg.p;
    for (const PrimitiveId id : seg.matched) {
      const double conf = map[id].confidence;
      const bool agrees = map[id].label == seg.dominant;
      const double updated = agrees ? raise_confidence(conf, gain) : lower_confidence(conf, gain);
      map.set_confidence(id, static_cast<float>(updated));
    }
  }
}

}  // namespace semfuse
