#pragma once

#include "semfuse/types.hpp"

#include <optional>
#include <vector>

namespace semfuse {

struct FusionConfig {
  double overlap_threshold = 0.7;        // tau_m
  double keyframe_translation = 0.1;     // meters
  double keyframe_rotation_deg = 10.0;   // degrees
  int stride = 4;                        // pixels between sampled primitives
  double opacity = 0.9;
  double scale_multiplier = 0.5;         // x local point spacing (stride * depth / focal)

  void validate() const;
};

// Detector segments are kept unchanged; a grid segment survives when its
// best overlap |g & d| / |g| with any detector segment is below tau_m.
// Detector pixels are never overwritten. Output ids are dense from 1:
// detector segments first, then surviving grid segments, each in
// ascending original id.
SegmentationFrame fuse_masks(const SegmentationFrame& grid, const SegmentationFrame& detector,
                             double overlap_threshold);

// True for the first frame (no previous keyframe) or when translation or
// rotation exceeds the configured thresholds.
bool select_keyframe(const Pose& current, const std::optional<Pose>& last_keyframe,
                     const FusionConfig& config);

// Maps raw segmenter scores from [0.88, 1.0] onto [0.5, 1.0]; inputs outside
// the source range are clamped first.
double rescale_confidence(double confidence);

struct PrimitiveGroup {
  SegmentId segment = 0;
  double raw_confidence = 0.0;
  double confidence = 0.0;  // rescaled
  std::vector<GaussianPrimitive> primitives;
};

// One primitive per stride-sampled valid-depth pixel of every segment.
// Primitives carry the segment id as a provisional label. Segments with no
// valid depth produce no group.
std::vector<PrimitiveGroup> init_primitives(const KeyframeRecord& keyframe,
                                            const CameraIntrinsics& intrinsics,
                                            const FusionConfig& config);

}  // namespace semfuse
