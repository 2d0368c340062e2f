#include "semfuse/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace semfuse {

void CameraIntrinsics::validate() const {
  if (!(focal > 0.0)) throw InputError("intrinsics: focal length must be positive");
  if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
}

double CameraIntrinsics::horizontal_fov() const {
  return 2.0 * std::atan(static_cast<double>(width) / (2.0 * focal));
}

double CameraIntrinsics::vertical_fov() const {
  return 2.0 * std::atan(static_cast<double>(height) / (2.0 * focal));
}

Pose::Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  constexpr double kTol = 1e-6;
  const Mat3 gram = rotation_.transpose() * rotation_;
  if (!rotation_.allFinite() || (gram - Mat3::Identity()).cwiseAbs().maxCoeff() > kTol) {
    throw InputError("pose rotation is not orthonormal");
  }
  if (std::abs(rotation_.determinant() - 1.0) > kTol) {
    throw InputError("pose rotation must have determinant +1");
  }
  if (!translation_.allFinite()) throw InputError("pose translation is not finite");
}

Pose Pose::from_quaternion(const Vec3& translation, double qx, double qy, double qz, double qw) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  const double n = q.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) throw InputError("pose quaternion has zero norm");
  q.coeffs() /= n;
  return Pose(q.toRotationMatrix(), translation);
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  // Canonical sign keeps serialized poses stable.
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  Pose out;
  out.rotation_ = rt;
  out.translation_ = -(rt * translation_);
  return out;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

double Pose::angle_to(const Pose& other) const {
  const Mat3 relative = rotation_.transpose() * other.rotation_;
  const double c = std::clamp((relative.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) {
    // Looking along `up`; any perpendicular works.
    right = forward.cross(Vec3::UnitX());
  }
  right.normalize();
  const Vec3 down = forward.cross(right).normalized();
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Pose(r, eye);
}

void SegmentationFrame::validate() const {
  for (const auto id : present_ids()) {
    const auto it = confidence.find(id);
    if (it == confidence.end()) {
      throw InputError("segment " + std::to_string(id) + " has no confidence entry");
    }
  }
  for (const auto& [id, c] : confidence) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw InputError("segment " + std::to_string(id) + " confidence outside [0, 1]");
    }
  }
}

std::vector<SegmentId> SegmentationFrame::present_ids() const {
  std::set<SegmentId> seen;
  for (const auto id : ids.pixels()) {
    if (id != 0) seen.insert(id);
  }
  return {seen.begin(), seen.end()};
}

void KeyframeRecord::validate(const CameraIntrinsics& intrinsics) const {
  const auto check = [&](int w, int h, const char* what) {
    if (w != intrinsics.width || h != intrinsics.height) {
      throw InputError(std::string("keyframe ") + std::to_string(index) + ": " + what +
                       " size does not match intrinsics");
    }
  };
  check(color.width(), color.height(), "color");
  check(depth.width(), depth.height(), "depth");
  check(segmentation.ids.width(), segmentation.ids.height(), "segmentation");
}

}  // namespace semfuse
