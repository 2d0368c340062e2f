#include "semfuse/geometry.hpp"

namespace semfuse {

Vec3 back_project_pixel(double u, double v, double z, const CameraIntrinsics& intrinsics,
                        const Pose& pose) {
  const Vec3 camera((u - intrinsics.cx) * z / intrinsics.focal,
                    (v - intrinsics.cy) * z / intrinsics.focal, z);
  return pose.to_world(camera);
}

std::vector<Vec3> back_project(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                               const Pose& pose, std::vector<std::size_t>* pixel_index) {
  intrinsics.validate();
  if (depth.width() != intrinsics.width || depth.height() != intrinsics.height) {
    throw InputError("back_project: depth image does not match intrinsics");
  }
  std::vector<Vec3> points;
  if (pixel_index) pixel_index->clear();
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double z = depth.at(u, v);
      if (!(z > 0.0)) continue;
      points.push_back(back_project_pixel(u, v, z, intrinsics, pose));
      if (pixel_index) pixel_index->push_back(depth.index(u, v));
    }
  }
  return points;
}

Projection project(const Vec3& world_point, const Pose& pose, const CameraIntrinsics& intrinsics) {
  const Vec3 c = pose.to_camera(world_point);
  Projection out;
  out.depth = c.z();
  out.in_front = c.z() > 0.0;
  if (out.in_front) {
    out.pixel = Vec2(intrinsics.focal * c.x() / c.z() + intrinsics.cx,
                     intrinsics.focal * c.y() / c.z() + intrinsics.cy);
  }
  return out;
}

}  // namespace semfuse
