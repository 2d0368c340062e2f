#include "semfuse/semantic_map.hpp"

#include <stdexcept>

namespace semfuse {

void LabelRegistry::restore(LabelId next) {
  if (next < 1) throw InputError("label registry: next id must be >= 1");
  if (next > next_) next_ = next;
}

PrimitiveId SemanticMap::insert(std::vector<GaussianPrimitive> batch) {
  const auto first = static_cast<PrimitiveId>(primitives_.size());
  if (batch.empty()) return first;
  primitives_.reserve(primitives_.size() + batch.size());
  for (auto& p : batch) {
    p.id = static_cast<PrimitiveId>(primitives_.size());
    primitives_.push_back(p);
  }
  rebuild_index();
  return first;
}

void SemanticMap::rebuild_index() {
  std::vector<Vec3> positions;
  positions.reserve(primitives_.size());
  for (const auto& p : primitives_) positions.push_back(p.position);
  index_ = KdTree(positions);
}

std::vector<Neighbor> SemanticMap::knn_query(const Vec3& point, std::size_t k,
                                             double radius) const {
  if (k < 1) throw std::invalid_argument("knn_query: k must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("knn_query: radius must be positive");
  return index_.knn(point, k, radius);
}

std::vector<Neighbor> SemanticMap::knn_query_labeled(const Vec3& point, std::size_t k,
                                                     double radius) const {
  if (k < 1) throw std::invalid_argument("knn_query: k must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("knn_query: radius must be positive");
  return index_.knn(point, k, radius,
                    [this](std::uint32_t id) { return primitives_[id].label != kUnlabeled; });
}

}  // namespace semfuse
