#include "semfuse/global_refine.hpp"

#include "semfuse/local_opt.hpp"

#include <boost/pending/disjoint_sets.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>

namespace semfuse {

void RefineConfig::validate() const {
  if (!(tau_low > 0.0 && tau_low < tau_high && tau_high < 1.0)) {
    throw InputError("refine: thresholds must satisfy 0 < tau_low < tau_high < 1");
  }
  if (!(search_radius > 0.0) || !(link_radius > 0.0) || !(search_cap > 0.0)) {
    throw InputError("refine: radii must be positive");
  }
}

std::vector<SemanticCluster> cluster(const SemanticMap& map, double link_radius) {
  if (!(link_radius > 0.0)) throw InputError("cluster: link radius must be positive");
  const auto prims = map.primitives();
  const std::size_t n = prims.size();
  boost::disjoint_sets_with_storage<> sets(n);
  const double r2 = link_radius * link_radius;
  for (std::size_t i = 0; i < n; ++i) {
    const GaussianPrimitive& p = prims[i];
    if (p.label == kUnlabeled) continue;
    map.index().visit_within(p.position, link_radius, [&](const Neighbor& nb) {
      if (nb.id <= i || nb.squared_distance >= r2) return;
      if (prims[nb.id].label != p.label) return;
      sets.union_set(i, static_cast<std::size_t>(nb.id));
    });
  }

  std::map<std::size_t, std::size_t> root_to_cluster;
  std::vector<SemanticCluster> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    if (prims[i].label == kUnlabeled) continue;
    const std::size_t root = sets.find_set(i);
    auto [it, inserted] = root_to_cluster.emplace(root, clusters.size());
    if (inserted) {
      clusters.push_back({});
      clusters.back().label = prims[i].label;
    }
    clusters[it->second].members.push_back(static_cast<PrimitiveId>(i));
  }
  for (auto& c : clusters) {
    double sum = 0.0;
    for (const PrimitiveId id : c.members) sum += prims[id].confidence;
    c.average_confidence = sum / static_cast<double>(c.members.size());
  }
  return clusters;
}

namespace {

KdTree high_confidence_index(const SemanticMap& map, double tau_high) {
  std::vector<Vec3> points;
  std::vector<std::uint32_t> ids;
  for (const auto& p : map.primitives()) {
    if (p.confidence > tau_high) {
      points.push_back(p.position);
      ids.push_back(p.id);
    }
  }
  return KdTree(points, ids);
}

}  // namespace

ClusterRefineResult refine_clusters(SemanticMap& map, const std::vector<SemanticCluster>& clusters,
                                    const RefineConfig& config) {
  config.validate();
  ClusterRefineResult result;
  result.processed.assign(map.size(), false);
  const KdTree high = high_confidence_index(map, config.tau_high);

  std::vector<std::int64_t> cluster_of(map.size(), -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const PrimitiveId id : clusters[c].members) cluster_of[id] = static_cast<std::int64_t>(c);
  }

  std::vector<LabelId> labels;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const SemanticCluster& cl = clusters[c];
    if (!(cl.average_confidence < config.tau_low)) continue;
    labels.clear();
    const auto outside = [&](std::uint32_t id) { return cluster_of[id] != static_cast<std::int64_t>(c); };
    for (const PrimitiveId id : cl.members) {
      const auto nb = high.nearest(map[id].position, config.search_cap, outside);
      if (nb) {
        labels.push_back(map[nb->id].label);
      } else {
        ++result.search_misses;
      }
    }
    if (labels.empty()) continue;
    const LabelId winner = majority_label(labels);
    for (const PrimitiveId id : cl.members) {
      map.set_label(id, winner);
      result.processed[id] = true;
    }
    ++result.clusters_relabeled;
    result.primitives_relabeled += cl.members.size();
  }
  if (result.search_misses > 0) {
    spdlog::debug("refine: {} cluster members found no high-confidence neighbor within {} m",
                  result.search_misses, config.search_cap);
  }
  return result;
}

std::size_t refine_individuals(SemanticMap& map, const std::vector<bool>& processed,
                               const RefineConfig& config) {
  config.validate();
  const KdTree high = high_confidence_index(map, config.tau_high);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const GaussianPrimitive& p = map[static_cast<PrimitiveId>(i)];
    if (i < processed.size() && processed[i]) continue;
    if (!(p.confidence < config.tau_low)) continue;
    const auto nb = high.nearest(p.position, config.search_radius);
    if (!nb) continue;
    map.set_label(p.id, map[nb->id].label);
    map.set_confidence(p.id, 0.5f);
    ++changed;
  }
  return changed;
}

RefineReport global_refine(SemanticMap& map, const RefineConfig& config) {
  config.validate();
  RefineReport report;
  const auto clusters = cluster(map, config.link_radius);
  report.clusters = clusters.size();
  const auto result = refine_clusters(map, clusters, config);
  report.clusters_relabeled = result.clusters_relabeled;
  report.cluster_primitives_relabeled = result.primitives_relabeled;
  report.search_misses = result.search_misses;
  report.individuals_relabeled = refine_individuals(map, result.processed, config);
  return report;
}

}  // namespace semfuse
