#pragma once

#include "semfuse/kdtree.hpp"
#include "semfuse/types.hpp"

#include <span>
#include <vector>

namespace semfuse {

// Issues fresh label ids; ids are never reused.
class LabelRegistry {
 public:
  LabelId issue() { return next_++; }
  LabelId next() const { return next_; }
  // Used when loading snapshots. Never moves the counter backwards.
  void restore(LabelId next);

 private:
  LabelId next_ = 1;
};

// The mutable world state: primitives, their spatial index, and the label
// registry. Single-writer: mutate from one thread; const queries may run
// concurrently between mutations.
//
// Positions are immutable after insertion, so label and confidence edits
// never invalidate the index. Insertion is batched and rebuilds the index.
class SemanticMap {
 public:
  std::size_t size() const { return primitives_.size(); }
  bool empty() const { return primitives_.empty(); }

  std::span<const GaussianPrimitive> primitives() const { return primitives_; }
  const GaussianPrimitive& operator[](PrimitiveId id) const { return primitives_[id]; }

  void set_label(PrimitiveId id, LabelId label) { primitives_[id].label = label; }
  void set_confidence(PrimitiveId id, float confidence) {
    primitives_[id].confidence = confidence;
  }

  // Appends the batch (ids are reassigned to insertion indices) and rebuilds
  // the spatial index. Returns the id of the first inserted primitive.
  PrimitiveId insert(std::vector<GaussianPrimitive> batch);

  const KdTree& index() const { return index_; }

  LabelRegistry& labels() { return labels_; }
  const LabelRegistry& labels() const { return labels_; }

  // At most k primitives within radius, ascending distance, ties by id.
  std::vector<Neighbor> knn_query(const Vec3& point, std::size_t k, double radius) const;

  // Same as knn_query, restricted to primitives with a label.
  std::vector<Neighbor> knn_query_labeled(const Vec3& point, std::size_t k, double radius) const;

 private:
  void rebuild_index();

  std::vector<GaussianPrimitive> primitives_;
  KdTree index_;
  LabelRegistry labels_;
};

}  // namespace semfuse
