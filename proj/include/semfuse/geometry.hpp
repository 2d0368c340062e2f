#pragma once

#include "semfuse/types.hpp"

#include <vector>

namespace semfuse {

// World-frame points for every pixel with depth > 0, row-major order.
// `pixel_index` (when requested) receives the linear pixel index of each point.
std::vector<Vec3> back_project(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                               const Pose& pose, std::vector<std::size_t>* pixel_index = nullptr);

// Back-projects a single pixel coordinate at camera depth z.
Vec3 back_project_pixel(double u, double v, double z, const CameraIntrinsics& intrinsics,
                        const Pose& pose);

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;  // camera-space z
  bool in_front = false;
};

// Pinhole projection. Points with z <= 0 come back with in_front = false.
Projection project(const Vec3& world_point, const Pose& pose, const CameraIntrinsics& intrinsics);

}  // namespace semfuse
