#include "semfuse/scene_graph.hpp"

#include "semfuse/kdtree.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace semfuse {

using nlohmann::json;

namespace {

struct Box {
  int u0, v0, u1, v1;
};

ViewImage cut(int keyframe, std::size_t area, const RgbImage& color, const LabelImage& labels,
              LabelId label, const Box& box, bool blackout) {
  ViewImage view;
  view.keyframe = keyframe;
  view.area = area;
  const int w = box.u1 - box.u0 + 1;
  const int h = box.v1 - box.v0 + 1;
  view.image = RgbImage(w, h);
  view.mask = MaskImage(w, h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const bool inside = labels.at(box.u0 + u, box.v0 + v) == label;
      view.mask.at(u, v) = inside ? 1 : 0;
      view.image.at(u, v) = (inside || !blackout) ? color.at(box.u0 + u, box.v0 + v) : Rgb8{};
    }
  }
  return view;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

Bounds trimmed_extent(const std::vector<Vec3>& points, double trim) {
  Bounds b;
  std::vector<double> axis(points.size());
  const std::size_t n = points.size();
  const std::size_t lo = static_cast<std::size_t>(std::floor(trim * static_cast<double>(n - 1)));
  const std::size_t hi = n - 1 - lo;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < n; ++i) axis[i] = points[i][k];
    std::nth_element(axis.begin(), axis.begin() + static_cast<std::ptrdiff_t>(lo), axis.end());
    b.min[k] = axis[lo];
    std::nth_element(axis.begin(), axis.begin() + static_cast<std::ptrdiff_t>(hi), axis.end());
    b.max[k] = axis[hi];
  }
  return b;
}

double box_gap(const Bounds& a, const Bounds& b) {
  const Vec3 gap = (a.min - b.max).cwiseMax(b.min - a.max).cwiseMax(0.0);
  return gap.norm();
}

}  // namespace

void ViewTracker::observe(int keyframe, const RgbImage& color, const LabelImage& labels) {
  if (!color.same_shape(labels)) throw InputError("view tracker: color and labels differ in size");
  struct Stat {
    std::size_t area = 0;
    Box box{0, 0, 0, 0};
  };
  std::map<LabelId, Stat> stats;
  for (int v = 0; v < labels.height(); ++v) {
    for (int u = 0; u < labels.width(); ++u) {
      const LabelId l = labels.at(u, v);
      if (l == kUnlabeled) continue;
      auto [it, fresh] = stats.try_emplace(l);
      Stat& s = it->second;
      if (fresh) s.box = {u, v, u, v};
      ++s.area;
      s.box.u0 = std::min(s.box.u0, u);
      s.box.u1 = std::max(s.box.u1, u);
      s.box.v0 = std::min(s.box.v0, v);
      s.box.v1 = std::max(s.box.v1, v);
    }
  }
  for (const auto& [label, s] : stats) {
    auto& kept = kept_[label];
    const bool full = kept.size() >= max_views_;
    if (full && !(s.area > kept.back().masked.area)) continue;
    const int bw = s.box.u1 - s.box.u0 + 1;
    const int bh = s.box.v1 - s.box.v0 + 1;
    const int mu = static_cast<int>(std::lround(0.5 * crop_margin_ * bw));
    const int mv = static_cast<int>(std::lround(0.5 * crop_margin_ * bh));
    const Box crop_box{std::max(0, s.box.u0 - mu), std::max(0, s.box.v0 - mv),
                       std::min(labels.width() - 1, s.box.u1 + mu),
                       std::min(labels.height() - 1, s.box.v1 + mv)};
    Kept k{cut(keyframe, s.area, color, labels, label, s.box, true),
           cut(keyframe, s.area, color, labels, label, crop_box, false)};
    // Ties keep the earlier keyframe first.
    auto pos = std::find_if(kept.begin(), kept.end(),
                            [&](const Kept& e) { return s.area > e.masked.area; });
    kept.insert(pos, std::move(k));
    if (kept.size() > max_views_) kept.pop_back();
  }
}

EntityViews ViewTracker::views(LabelId label) const {
  EntityViews out;
  out.entity = label;
  const auto it = kept_.find(label);
  if (it == kept_.end() || it->second.empty()) return out;
  out.crop = &it->second.front().crop;
  for (const auto& k : it->second) out.masked.push_back(&k.masked);
  return out;
}

std::vector<std::pair<int, std::size_t>> ViewTracker::summary(LabelId label) const {
  std::vector<std::pair<int, std::size_t>> out;
  const auto it = kept_.find(label);
  if (it == kept_.end()) return out;
  for (const auto& k : it->second) out.emplace_back(k.masked.keyframe, k.masked.area);
  return out;
}

json SceneGraph::to_json() const {
  json nodes_json = json::array();
  for (const auto& [id, n] : nodes) {
    json views = json::array();
    for (const auto& [kf, area] : n.views) views.push_back({{"keyframe", kf}, {"area", area}});
    nodes_json.push_back({{"id", id},
                          {"tag", n.tag},
                          {"caption", n.caption},
                          {"centroid", vec_json(n.centroid)},
                          {"confidence", n.confidence},
                          {"views", views}});
  }
  json edges_json = json::array();
  for (const auto& [key, e] : edges) {
    edges_json.push_back(
        {{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}, {"vector", vec_json(e.vector)}});
  }
  return {{"nodes", nodes_json}, {"edges", edges_json}};
}

SceneGraph SceneGraph::from_json(const json& j) {
  SceneGraph g;
  try {
    for (const auto& n : j.at("nodes")) {
      GraphNode node;
      node.id = n.at("id").get<LabelId>();
      node.tag = n.at("tag").get<std::string>();
      node.caption = n.at("caption").get<std::string>();
      node.centroid = vec_from(n.at("centroid"));
      node.confidence = n.at("confidence").get<double>();
      if (n.contains("views")) {
        for (const auto& v : n.at("views")) {
          node.views.emplace_back(v.at("keyframe").get<int>(), v.at("area").get<std::size_t>());
        }
      }
      g.nodes[node.id] = std::move(node);
    }
    for (const auto& e : j.at("edges")) {
      GraphEdge edge;
      edge.src = e.at("src").get<LabelId>();
      edge.dst = e.at("dst").get<LabelId>();
      edge.relation = e.at("relation").get<std::string>();
      edge.vector = vec_from(e.at("vector"));
      if (edge.src == edge.dst) throw InputError("graph: self edge");
      g.edges[{std::min(edge.src, edge.dst), std::max(edge.src, edge.dst)}] = edge;
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("graph json: ") + e.what());
  }
  return g;
}

std::map<LabelId, EntityCloud> entity_clouds(const SemanticMap& map, std::size_t min_primitives) {
  std::map<LabelId, EntityCloud> clouds;
  for (const auto& p : map.primitives()) {
    if (p.label == kUnlabeled) continue;
    auto& c = clouds[p.label];
    c.label = p.label;
    c.points.push_back(p.position);
  }
  for (auto it = clouds.begin(); it != clouds.end();) {
    EntityCloud& c = it->second;
    if (c.points.size() < std::max<std::size_t>(min_primitives, 1)) {
      it = clouds.erase(it);
      continue;
    }
    Vec3 sum = Vec3::Zero();
    c.bounds.min = c.bounds.max = c.points.front();
    for (const Vec3& p : c.points) {
      sum += p;
      c.bounds.min = c.bounds.min.cwiseMin(p);
      c.bounds.max = c.bounds.max.cwiseMax(p);
    }
    c.centroid = sum / static_cast<double>(c.points.size());
    c.extent = trimmed_extent(c.points, 0.02);
    ++it;
  }
  return clouds;
}

double proximity_fraction(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double theta) {
  if (a.empty() || b.empty()) return 0.0;
  const KdTree tree(b);
  std::size_t near = 0;
  for (const Vec3& p : a) {
    if (tree.any_within_strict(p, theta)) ++near;
  }
  return static_cast<double>(near) / static_cast<double>(a.size());
}

std::vector<ProximityPair> find_edges(const std::map<LabelId, EntityCloud>& clouds, double theta_e,
                                      double tau_e, const std::set<LabelId>* focus) {
  std::vector<ProximityPair> out;
  std::map<LabelId, KdTree> trees;
  const auto tree_of = [&](const EntityCloud& c) -> const KdTree& {
    auto it = trees.find(c.label);
    if (it == trees.end()) it = trees.emplace(c.label, KdTree(c.points)).first;
    return it->second;
  };
  const auto fraction = [&](const EntityCloud& from, const EntityCloud& to) {
    const KdTree& tree = tree_of(to);
    std::size_t near = 0;
    for (const Vec3& p : from.points) {
      if (tree.any_within_strict(p, theta_e)) ++near;
    }
    return static_cast<double>(near) / static_cast<double>(from.points.size());
  };
  for (auto i = clouds.begin(); i != clouds.end(); ++i) {
    for (auto j = std::next(i); j != clouds.end(); ++j) {
      if (focus && !focus->count(i->first) && !focus->count(j->first)) continue;
      const EntityCloud& a = i->second;
      const EntityCloud& b = j->second;
      if (a.points.empty() || b.points.empty()) continue;
      if (box_gap(a.bounds, b.bounds) >= theta_e) continue;
      const double r = std::max(fraction(a, b), fraction(b, a));
      if (r > tau_e) out.push_back({i->first, j->first, r});
    }
  }
  return out;
}

GraphUpdateReport update_graph(SceneGraph& graph, const SemanticMap& map,
                               const ViewTracker& tracker, InferenceBackend& backend,
                               const PromptSet& prompts, const GraphConfig& config) {
  GraphUpdateReport report;
  const auto clouds = entity_clouds(map, config.min_entity_primitives);

  for (auto it = graph.nodes.begin(); it != graph.nodes.end();) {
    if (clouds.count(it->first)) {
      ++it;
      continue;
    }
    const LabelId gone = it->first;
    it = graph.nodes.erase(it);
    ++report.removed;
    for (auto e = graph.edges.begin(); e != graph.edges.end();) {
      if (e->first.first == gone || e->first.second == gone) {
        e = graph.edges.erase(e);
        ++report.edges_removed;
      } else {
        ++e;
      }
    }
  }

  for (const auto& [label, cloud] : clouds) {
    const auto node = graph.nodes.find(label);
    const bool fresh = node == graph.nodes.end();
    if (!fresh && !(node->second.confidence < config.tau_update)) continue;
    if (tracker.views(label).masked.empty()) continue;  // never rendered yet
    report.updated.insert(label);
  }

  std::vector<LabelId> captioned;
  std::vector<std::string> captions;
  for (const LabelId label : report.updated) {
    const bool fresh = !graph.nodes.count(label);
    GraphNode& node = graph.nodes[label];
    if (fresh) {
      node.id = label;
      ++report.added;
    }
    node.centroid = clouds.at(label).centroid;
    node.views = tracker.summary(label);
    const EntityViews views = tracker.views(label);
    try {
      const std::string caption = backend.caption(views, prompts.caption);
      const double score = backend.score(*views.crop, caption);
      node.caption = caption;
      node.confidence = std::clamp(score, 0.0, 1.0);
      captioned.push_back(label);
      captions.push_back(caption);
    } catch (const BackendError& e) {
      ++report.backend_failures;
      spdlog::warn("scene graph: captioning entity {} failed: {}", label, e.what());
      if (fresh) {
        node.caption.clear();
        node.confidence = 0.0;
      }
    }
  }
  if (!captioned.empty()) {
    try {
      const auto tags = backend.tag(captions, prompts.tag);
      for (std::size_t i = 0; i < captioned.size(); ++i) graph.nodes[captioned[i]].tag = tags.at(i);
    } catch (const std::exception& e) {
      ++report.backend_failures;
      spdlog::warn("scene graph: tagging failed: {}", e.what());
    }
  }

  // Edges touching the update set are rediscovered; edges still lacking a
  // relation from an earlier failure are retried.
  std::map<LabelId, EntityCloud> node_clouds;
  for (const auto& [label, node] : graph.nodes) node_clouds.emplace(label, clouds.at(label));
  const auto pairs = find_edges(node_clouds, config.theta_e, config.tau_e, &report.updated);
  std::set<EdgeKey> found;
  for (const auto& p : pairs) found.insert({p.a, p.b});
  for (auto e = graph.edges.begin(); e != graph.edges.end();) {
    const bool touches = report.updated.count(e->first.first) || report.updated.count(e->first.second);
    if (touches && !found.count(e->first)) {
      e = graph.edges.erase(e);
      ++report.edges_removed;
    } else {
      ++e;
    }
  }
  std::set<EdgeKey> pending = found;
  for (const auto& [key, edge] : graph.edges) {
    if (edge.relation.empty()) pending.insert(key);
  }

  std::vector<PairDescriptor> descriptors;
  for (const auto& key : pending) {
    const GraphNode& s = graph.nodes.at(key.first);
    const GraphNode& d = graph.nodes.at(key.second);
    PairDescriptor pd;
    pd.src = key.first;
    pd.dst = key.second;
    pd.src_tag = s.tag;
    pd.dst_tag = d.tag;
    pd.src_center = s.centroid;
    pd.dst_center = d.centroid;
    pd.vector = d.centroid - s.centroid;
    pd.src_bounds = clouds.at(key.first).extent;
    pd.dst_bounds = clouds.at(key.second).extent;
    descriptors.push_back(pd);
  }
  std::vector<std::string> relations;
  bool relations_ok = descriptors.empty();
  if (!descriptors.empty()) {
    try {
      relations = backend.relations(descriptors, prompts.edge);
      if (relations.size() != descriptors.size()) throw BackendError("relation count mismatch");
      relations_ok = true;
    } catch (const std::exception& e) {
      ++report.backend_failures;
      spdlog::warn("scene graph: relation inference failed: {}", e.what());
    }
  }
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    const EdgeKey key{descriptors[i].src, descriptors[i].dst};
    auto [it, inserted] = graph.edges.try_emplace(key);
    GraphEdge& edge = it->second;
    if (inserted) ++report.edges_added;
    edge.src = key.first;
    edge.dst = key.second;
    edge.vector = descriptors[i].vector;
    if (relations_ok) edge.relation = relations[i];
  }
  return report;
}

}  // namespace semfuse
