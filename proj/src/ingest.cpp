#include "semfuse/ingest.hpp"

#include "semfuse/geometry.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace semfuse {

void FusionConfig::validate() const {
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) {
    throw InputError("fusion: overlap threshold must lie in (0, 1]");
  }
  if (stride < 1) throw InputError("fusion: stride must be >= 1");
  if (!(opacity > 0.0 && opacity <= 1.0)) throw InputError("fusion: opacity must lie in (0, 1]");
  if (!(scale_multiplier > 0.0)) throw InputError("fusion: scale multiplier must be positive");
  if (!(keyframe_translation >= 0.0) || !(keyframe_rotation_deg >= 0.0)) {
    throw InputError("fusion: keyframe thresholds must be non-negative");
  }
}

SegmentationFrame fuse_masks(const SegmentationFrame& grid, const SegmentationFrame& detector,
                             double overlap_threshold) {
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) {
    throw InputError("fuse_masks: overlap threshold must lie in (0, 1]");
  }
  const bool has_detector = !detector.ids.empty();
  if (has_detector && !grid.ids.same_shape(detector.ids)) {
    throw InputError("fuse_masks: grid and detector segmentations differ in size");
  }

  // area[g] and intersections[(g, d)]
  std::map<SegmentId, std::size_t> grid_area;
  std::map<std::pair<SegmentId, SegmentId>, std::size_t> intersection;
  for (std::size_t i = 0; i < grid.ids.size(); ++i) {
    const SegmentId g = grid.ids[i];
    if (g == 0) continue;
    ++grid_area[g];
    if (has_detector && detector.ids[i] != 0) ++intersection[{g, detector.ids[i]}];
  }
  std::map<SegmentId, double> best_overlap;
  for (const auto& [key, count] : intersection) {
    const double ratio = static_cast<double>(count) / static_cast<double>(grid_area[key.first]);
    best_overlap[key.first] = std::max(best_overlap[key.first], ratio);
  }

  SegmentationFrame out;
  out.ids = IdImage(grid.ids.width(), grid.ids.height(), 0);
  std::map<SegmentId, SegmentId> detector_to_out;
  std::map<SegmentId, SegmentId> grid_to_out;
  SegmentId next = 1;

  if (has_detector) {
    for (const SegmentId d : detector.present_ids()) detector_to_out[d] = next++;
    for (std::size_t i = 0; i < detector.ids.size(); ++i) {
      if (detector.ids[i] != 0) out.ids[i] = detector_to_out[detector.ids[i]];
    }
    for (const auto& [d, o] : detector_to_out) {
      if (auto it = detector.confidence.find(d); it != detector.confidence.end()) {
        out.confidence[o] = it->second;
      }
      if (auto it = detector.detector_label.find(d); it != detector.detector_label.end()) {
        out.detector_label[o] = it->second;
      }
    }
  }

  // Surviving grid segments only receive pixels no detector segment claims;
  // a survivor left with no free pixels is dropped.
  std::map<SegmentId, std::size_t> free_area;
  for (std::size_t i = 0; i < grid.ids.size(); ++i) {
    const SegmentId g = grid.ids[i];
    if (g == 0 || out.ids[i] != 0) continue;
    ++free_area[g];
  }
  for (const auto& [g, area] : grid_area) {
    const double overlap = best_overlap.count(g) ? best_overlap[g] : 0.0;
    if (overlap >= overlap_threshold || free_area[g] == 0) continue;
    grid_to_out[g] = next++;
  }
  for (std::size_t i = 0; i < grid.ids.size(); ++i) {
    const SegmentId g = grid.ids[i];
    if (g == 0 || out.ids[i] != 0) continue;
    if (auto it = grid_to_out.find(g); it != grid_to_out.end()) out.ids[i] = it->second;
  }
  for (const auto& [g, o] : grid_to_out) {
    if (auto it = grid.confidence.find(g); it != grid.confidence.end()) {
      out.confidence[o] = it->second;
    }
    if (auto it = grid.detector_label.find(g); it != grid.detector_label.end()) {
      out.detector_label[o] = it->second;
    }
  }
  return out;
}

bool select_keyframe(const Pose& current, const std::optional<Pose>& last_keyframe,
                     const FusionConfig& config) {
  if (!last_keyframe) return true;
  const double translation = current.distance_to(*last_keyframe);
  const double rotation_deg = current.angle_to(*last_keyframe) * 180.0 / std::numbers::pi;
  return translation > config.keyframe_translation || rotation_deg > config.keyframe_rotation_deg;
}

double rescale_confidence(double confidence) {
  constexpr double kLow = 0.88;
  constexpr double kHigh = 1.0;
  double c = std::isnan(confidence) ? kLow : confidence;
  c = std::clamp(c, kLow, kHigh);
  return 0.5 + 0.5 * (c - kLow) / (kHigh - kLow);
}

std::vector<PrimitiveGroup> init_primitives(const KeyframeRecord& keyframe,
                                            const CameraIntrinsics& intrinsics,
                                            const FusionConfig& config) {
  intrinsics.validate();
  config.validate();
  keyframe.validate(intrinsics);

  std::map<SegmentId, PrimitiveGroup> groups;
  for (const SegmentId id : keyframe.segmentation.present_ids()) {
    PrimitiveGroup g;
    g.segment = id;
    const auto it = keyframe.segmentation.confidence.find(id);
    g.raw_confidence = it != keyframe.segmentation.confidence.end() ? it->second : 0.0;
    g.confidence = rescale_confidence(g.raw_confidence);
    groups.emplace(id, std::move(g));
  }

  const auto& ids = keyframe.segmentation.ids;
  for (int v = 0; v < ids.height(); v += config.stride) {
    for (int u = 0; u < ids.width(); u += config.stride) {
      const SegmentId id = ids.at(u, v);
      if (id == 0) continue;
      const double z = keyframe.depth.at(u, v);
      if (!(z > 0.0)) continue;
      PrimitiveGroup& g = groups.at(id);
      GaussianPrimitive p;
      p.position = back_project_pixel(u, v, z, intrinsics, keyframe.pose);
      p.scale = static_cast<float>(config.scale_multiplier * config.stride * z / intrinsics.focal);
      p.opacity = static_cast<float>(config.opacity);
      p.color = keyframe.color.at(u, v);
      p.label = id;
      p.confidence = static_cast<float>(g.confidence);
      g.primitives.push_back(p);
    }
  }

  std::vector<PrimitiveGroup> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) {
    if (g.primitives.empty()) {
      spdlog::debug("keyframe {}: segment {} has no valid depth samples, skipped", keyframe.index,
                    id);
      continue;
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace semfuse
