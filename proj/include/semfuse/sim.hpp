#pragma once

#include "semfuse/backend.hpp"
#include "semfuse/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <string>
#include <vector>

namespace semfuse {

enum class ShapeKind { box, sphere, plane };

// Axis-aligned box (center, full size), sphere (center, radius), or a
// horizontal rectangle (center, size.x by size.y) at height center.z.
struct Shape {
  ShapeKind kind = ShapeKind::box;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Zero();
  double radius = 0.0;

  Vec3 min_corner() const;
  Vec3 max_corner() const;
};

struct Entity {
  std::uint32_t id = 0;  // 1-based, 0 is background
  std::string name;
  Shape shape;
  Rgb8 color;
};

struct Relation {
  std::string subject;
  std::string relation;
  std::string object;

  bool operator==(const Relation&) const = default;
  bool operator<(const Relation& o) const {
    return std::tie(subject, relation, object) < std::tie(o.subject, o.relation, o.object);
  }
};

struct SceneSpec {
  std::string name;
  CameraIntrinsics intrinsics;
  std::vector<std::pair<std::string, Shape>> entities;
  std::vector<Pose> trajectory;
  double touch_tolerance = 1e-6;
  double jitter_deg = 0.0;            // seeded per-frame look-direction jitter
  std::vector<Relation> expected;     // hand-written adjacency list, may be empty

  // Trajectory forms: {"type":"orbit", "center", "radius", "height", "frames",
  // "start_deg", "sweep_deg"} or {"type":"waypoints", "poses":[{"eye","target"}]}.
  static SceneSpec from_json(const nlohmann::json& j);
  static SceneSpec load(const std::filesystem::path& path);
};

struct SyntheticScene {
  std::string name;
  CameraIntrinsics intrinsics;
  std::vector<Entity> entities;
  std::vector<Relation> relations;  // derived from contacts, sorted
  std::vector<Pose> trajectory;

  // Entity whose surface lies within `tolerance` of the point (closest
  // wins), 0 otherwise.
  std::uint32_t entity_at(const Vec3& point, double tolerance = 1e-3) const;
  std::vector<NamedColor> palette() const;
  nlohmann::json to_json() const;
  static SyntheticScene from_json(const nlohmann::json& j);
};

// Validates the layout (overlapping solids throw InputError), assigns seeded
// colors, applies seeded trajectory jitter and derives contact relations.
SyntheticScene generate(std::uint64_t seed, const SceneSpec& spec);

struct RayHit {
  double t = 0.0;  // camera-space depth for rays with unit z component
  std::uint32_t entity = 0;
};

// Nearest hit along origin + t * direction, t > 0.
std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin,
                               const Vec3& direction);

// Distance along the ray to a single shape, if hit with t > 0.
std::optional<double> intersect(const Shape& shape, const Vec3& origin, const Vec3& direction);

struct NoiseSpec {
  double swap_probability = 0.0;
  int boundary_radius = 0;  // > 0 dilates, < 0 erodes, pixels
  double drop_probability = 0.0;
  double confidence_jitter = 0.0;
  double detector_recall = 0.0;  // > 0 writes a detector segmentation too

  void validate() const;
  static NoiseSpec from_json(const nlohmann::json& j);
  static NoiseSpec load(const std::filesystem::path& path);
};

struct CleanFrame {
  RgbImage color;
  DepthImage depth;
  IdImage entity_ids;
};

CleanFrame render_clean(const SyntheticScene& scene, const Pose& pose);

// Per-frame corrupted segmentation. `previous_ids` maps entity id to the
// segment id used for it in the previous frame and is updated in place.
SegmentationFrame corrupt(const IdImage& entity_ids, const NoiseSpec& noise, std::uint64_t seed,
                          int frame, std::map<std::uint32_t, SegmentId>& previous_ids);

// Writes the frame directory (frame-ingest layout) plus gt/ masks and
// scene.json.
void render_frames(const SyntheticScene& scene, const NoiseSpec& noise, std::uint64_t seed,
                   const std::filesystem::path& out);

// mt19937_64 with hand-written conversions, so streams do not depend on
// the standard library's distribution implementations.
class SimRandom {
 public:
  explicit SimRandom(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }  // [0, 1)
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace semfuse
