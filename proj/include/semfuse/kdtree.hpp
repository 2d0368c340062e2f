#pragma once

#include "semfuse/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace semfuse {

struct Neighbor {
  std::uint32_t id = 0;
  double squared_distance = 0.0;

  double distance() const { return std::sqrt(squared_distance); }
  bool operator==(const Neighbor&) const = default;
};

// Strict weak order used by every neighbor query: distance first, then id.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
  return a.id < b.id;
}

// Static 3-d tree over a point set. Each point carries an id that is used for
// tie-breaking, so query results equal a brute-force scan sorted by
// (squared distance, id).
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points) {
    std::vector<std::uint32_t> ids(points.size());
    std::iota(ids.begin(), ids.end(), 0u);
    build(points, ids);
  }
  KdTree(std::span<const Vec3> points, std::span<const std::uint32_t> ids) {
    build(points, ids);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // At most k points with distance <= radius that satisfy keep(id),
  // ascending by (distance, id).
  template <typename Keep>
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k, double radius, Keep&& keep) const {
    std::vector<Neighbor> heap;
    if (empty() || k == 0 || !(radius >= 0.0)) return heap;
    heap.reserve(k + 1);
    KnnState<Keep> state{query, k, radius * radius, keep, heap};
    knn_recurse(0, state);
    std::sort_heap(heap.begin(), heap.end(), neighbor_less);
    return heap;
  }

  std::vector<Neighbor> knn(const Vec3& query, std::size_t k, double radius) const {
    return knn(query, k, radius, [](std::uint32_t) { return true; });
  }

  template <typename Keep>
  std::optional<Neighbor> nearest(const Vec3& query, double radius, Keep&& keep) const {
    auto result = knn(query, 1, radius, std::forward<Keep>(keep));
    if (result.empty()) return std::nullopt;
    return result.front();
  }

  std::optional<Neighbor> nearest(const Vec3& query, double radius) const {
    return nearest(query, radius, [](std::uint32_t) { return true; });
  }

  // Calls visit(Neighbor) for every point with distance <= radius, in
  // unspecified order.
  template <typename Visit>
  void visit_within(const Vec3& query, double radius, Visit&& visit) const {
    if (empty() || !(radius >= 0.0)) return;
    visit_recurse(0, query, radius * radius, visit);
  }

  std::vector<Neighbor> radius_search(const Vec3& query, double radius) const {
    std::vector<Neighbor> out;
    visit_within(query, radius, [&](const Neighbor& n) { out.push_back(n); });
    std::sort(out.begin(), out.end(), neighbor_less);
    return out;
  }

  // True when some point lies strictly closer than radius.
  bool any_within_strict(const Vec3& query, double radius) const {
    if (empty()) return false;
    return any_recurse(0, query, radius * radius);
  }

 private:
  static constexpr std::uint32_t kLeafSize = 12;

  struct Node {
    double split = 0.0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;  // -1 marks a leaf
  };

  template <typename Keep>
  struct KnnState {
    const Vec3& query;
    std::size_t k;
    double radius2;
    Keep& keep;
    std::vector<Neighbor>& heap;

    double bound() const { return heap.size() < k ? radius2 : heap.front().squared_distance; }
  };

  void build(std::span<const Vec3> points, std::span<const std::uint32_t> ids) {
    if (points.size() != ids.size()) throw InputError("KdTree: points and ids differ in size");
    std::vector<std::uint32_t> order(points.size());
    std::iota(order.begin(), order.end(), 0u);
    nodes_.clear();
    nodes_.reserve(2 * points.size() / kLeafSize + 2);
    if (!points.empty()) build_node(points, ids, order, 0, static_cast<std::uint32_t>(order.size()));
    points_.resize(order.size());
    ids_.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      points_[i] = points[order[i]];
      ids_[i] = ids[order[i]];
    }
  }

  std::int32_t build_node(std::span<const Vec3> points, std::span<const std::uint32_t> ids,
                          std::vector<std::uint32_t>& order, std::uint32_t begin,
                          std::uint32_t end) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{0.0, begin, end, -1, -1, -1});
    if (end - begin <= kLeafSize) return index;

    Vec3 lo = points[order[begin]];
    Vec3 hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points[order[i]]);
      hi = hi.cwiseMax(points[order[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return index;  // all coincident

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double pa = points[a][axis];
                       const double pb = points[b][axis];
                       if (pa != pb) return pa < pb;
                       return ids[a] < ids[b];
                     });
    const double split = points[order[mid]][axis];
    const auto left = build_node(points, ids, order, begin, mid);
    const auto right = build_node(points, ids, order, mid, end);
    Node& node = nodes_[static_cast<std::size_t>(index)];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return index;
  }

  template <typename State>
  void knn_recurse(std::int32_t index, State& state) const {
    const Node& node = nodes_[static_cast<std::size_t>(index)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d2 = squared_distance(points_[i], state.query);
        if (d2 > state.radius2) continue;
        const Neighbor candidate{ids_[i], d2};
        if (state.heap.size() == state.k && !neighbor_less(candidate, state.heap.front())) {
          continue;
        }
        if (!state.keep(ids_[i])) continue;
        if (state.heap.size() == state.k) {
          std::pop_heap(state.heap.begin(), state.heap.end(), neighbor_less);
          state.heap.pop_back();
        }
        state.heap.push_back(candidate);
        std::push_heap(state.heap.begin(), state.heap.end(), neighbor_less);
      }
      return;
    }
    const double diff = state.query[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    knn_recurse(near, state);
    if (diff * diff <= state.bound()) knn_recurse(far, state);
  }

  template <typename Visit>
  void visit_recurse(std::int32_t index, const Vec3& query, double radius2, Visit& visit) const {
    const Node& node = nodes_[static_cast<std::size_t>(index)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d2 = squared_distance(points_[i], query);
        if (d2 <= radius2) visit(Neighbor{ids_[i], d2});
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    visit_recurse(near, query, radius2, visit);
    if (diff * diff <= radius2) visit_recurse(far, query, radius2, visit);
  }

  bool any_recurse(std::int32_t index, const Vec3& query, double radius2) const {
    const Node& node = nodes_[static_cast<std::size_t>(index)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        if (squared_distance(points_[i], query) < radius2) return true;
      }
      return false;
    }
    const double diff = query[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    if (any_recurse(near, query, radius2)) return true;
    return diff * diff < radius2 && any_recurse(far, query, radius2);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> ids_;
  std::vector<Node> nodes_;
};

}  // namespace semfuse
