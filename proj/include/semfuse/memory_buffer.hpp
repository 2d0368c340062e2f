#pragma once

#include "semfuse/kdtree.hpp"
#include "semfuse/render.hpp"
#include "semfuse/semantic_map.hpp"

#include <vector>

namespace semfuse {

struct MemoryEntry {
  KeyframeRecord keyframe;
  std::vector<Vec3> cloud;          // world frame, one point per valid-depth pixel
  std::vector<std::size_t> pixels;  // linear pixel index of each cloud point
  double r_in = 0.0;
  double r_overlap = 0.0;
};

struct Admission {
  bool admitted = false;
  double r_in = 0.0;
  double r_overlap = 0.0;
};

// Fraction of world points inside the viewing frustum of `view`
// (z > 0 and both tangent bounds). 1 for an empty set.
double frustum_ratio(const std::vector<Vec3>& world_points, const Pose& view,
                     const CameraIntrinsics& intrinsics);

class MemoryBuffer {
 public:
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Aggregate index over every entry cloud; ids enumerate points in entry order.
  const KdTree& aggregate() const { return aggregate_; }
  std::size_t aggregate_size() const { return aggregate_points_.size(); }

  // Fraction of points with some buffer point strictly closer than radius.
  double overlap_ratio(const std::vector<Vec3>& points, double radius) const;

  Admission admit(const KeyframeRecord& candidate, const CameraIntrinsics& intrinsics,
                  double tau_long, double search_radius);

 private:
  std::vector<MemoryEntry> entries_;
  std::vector<Vec3> aggregate_points_;
  KdTree aggregate_;
};

struct ConsistencyResult {
  LabelImage remapped;                  // segmentation remapped to scene labels
  std::map<LabelId, double> class_iou;  // P^k for every class in either image
  DepthImage pixel_confidence;          // P_2D-3D(p)
};

// Remaps each segment to the majority non-background rendered label under
// it (ties toward the lower label, all-background segments to 0), then
// scores per-class IoU against the rendered labels.
ConsistencyResult consistency(const LabelImage& rendered, const SegmentationFrame& segmentation);

struct LongtermConfig {
  double search_radius = 0.1;
  RenderOptions render;
};

struct LongtermReport {
  std::size_t entries = 0;
  std::size_t raised = 0;
  std::size_t lowered = 0;
};

// Confidence-only update from every buffer entry, oldest first.
LongtermReport longterm_update(SemanticMap& map, const MemoryBuffer& buffer,
                               const CameraIntrinsics& intrinsics, const LongtermConfig& config);

}  // namespace semfuse
