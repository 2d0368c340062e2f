#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semfuse {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using LabelId = std::uint32_t;
using PrimitiveId = std::uint32_t;
using SegmentId = std::uint32_t;

// Label 0 marks primitives that carry no semantic information.
inline constexpr LabelId kUnlabeled = 0;

// Malformed or inconsistent inputs (dimension mismatches, bad files, bad poses).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rgb8 {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb8&) const = default;
};

// Dense row-major image. Pixel (u, v) is column u, row v.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) throw InputError("negative image dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int u, int v) { return data_[index(u, v)]; }
  const T& at(int u, int v) const { return data_[index(u, v)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }

  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using RgbImage = Image<Rgb8>;
using DepthImage = Image<double>;  // meters, 0 = invalid
using IdImage = Image<std::uint32_t>;
using LabelImage = Image<LabelId>;

struct CameraIntrinsics {
  double focal = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  // Throws InputError unless focal > 0 and width, height > 0.
  void validate() const;

  double horizontal_fov() const;
  double vertical_fov() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

// Rigid camera-to-world transform.
class Pose {
 public:
  Pose();
  // Throws InputError when rotation is not orthonormal with det +1 (1e-6).
  Pose(const Mat3& rotation, const Vec3& translation);

  // Normalizes the quaternion; throws on a zero-norm quaternion.
  static Pose from_quaternion(const Vec3& translation, double qx, double qy, double qz,
                              double qw);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  Vec3 to_world(const Vec3& camera_point) const { return rotation_ * camera_point + translation_; }
  Vec3 to_camera(const Vec3& world_point) const {
    return rotation_.transpose() * (world_point - translation_);
  }

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;

  // Relative rotation angle in radians.
  double angle_to(const Pose& other) const;
  double distance_to(const Pose& other) const { return (translation_ - other.translation_).norm(); }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

// Camera at `eye` looking at `target`; x right, y down, z forward.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

struct GaussianPrimitive {
  PrimitiveId id = 0;  // insertion index, assigned by SemanticMap
  Vec3 position = Vec3::Zero();
  float scale = 0.01f;  // isotropic standard deviation, meters
  float opacity = 1.0f;
  Rgb8 color;
  LabelId label = kUnlabeled;
  float confidence = 0.0f;
};

struct SegmentationFrame {
  IdImage ids;  // 0 = no segment
  std::map<SegmentId, double> confidence;
  std::map<SegmentId, std::string> detector_label;

  // Throws InputError when a nonzero id lacks a confidence or a
  // confidence leaves [0, 1].
  void validate() const;

  // Ids present in the instance map, ascending, excluding 0.
  std::vector<SegmentId> present_ids() const;
};

struct KeyframeRecord {
  int index = 0;
  RgbImage color;
  DepthImage depth;
  Pose pose;
  SegmentationFrame segmentation;

  // Throws InputError unless every image matches the intrinsics' W x H.
  void validate(const CameraIntrinsics& intrinsics) const;
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace semfuse
