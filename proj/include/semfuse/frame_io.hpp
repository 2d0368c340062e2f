#pragma once

#include "semfuse/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace semfuse {

struct FrameEntry {
  int index = 0;
  Pose pose;
};

// A frame directory: color/, depth/, seg/ (and optional seg_det/), poses.txt,
// intrinsics.json.
class FrameSequence {
 public:
  // Throws InputError("no frames") when poses.txt is missing or empty.
  static FrameSequence open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const std::vector<FrameEntry>& frames() const { return frames_; }
  bool has_detector() const;

  // Loads frame `frame_index` (the index column of poses.txt). When seg_det/
  // exists the detector segmentation is fused in with `overlap_threshold`.
  KeyframeRecord load(int frame_index, double overlap_threshold = 0.7) const;

 private:
  std::filesystem::path root_;
  CameraIntrinsics intrinsics_;
  std::vector<FrameEntry> frames_;
};

std::string frame_name(int index, const std::string& extension);

CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& intrinsics);

std::vector<FrameEntry> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, const std::vector<FrameEntry>& frames);

// "tx ty tz qx qy qz qw"
Pose parse_pose(const std::string& text);
std::string format_pose(const Pose& pose);

SegmentationFrame read_segmentation(const std::filesystem::path& png,
                                    const std::filesystem::path& json);
void write_segmentation(const std::filesystem::path& png, const std::filesystem::path& json,
                        const SegmentationFrame& segmentation);

DepthImage read_depth_mm(const std::filesystem::path& path);
void write_depth_mm(const std::filesystem::path& path, const DepthImage& depth);

// Writes color, depth and segmentation of one frame under `root`.
void write_frame(const std::filesystem::path& root, const KeyframeRecord& frame);

}  // namespace semfuse
