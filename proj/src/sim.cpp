#include "semfuse/sim.hpp"

#include "semfuse/frame_io.hpp"
#include "semfuse/png_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace semfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flat colors handed out to entities; black is reserved for background.
const Rgb8 kPalette[] = {
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},
    {145, 30, 180},  {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212},
    {0, 128, 128},   {220, 190, 255}, {170, 110, 40},  {255, 250, 200}, {128, 0, 0},
    {170, 255, 195}, {128, 128, 0},   {255, 215, 180}, {0, 0, 128},     {128, 128, 128},
    {200, 200, 200}, {100, 60, 30},   {30, 90, 60},    {90, 30, 90},
};

Vec3 vec3(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

const char* kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::box:
      return "box";
    case ShapeKind::sphere:
      return "sphere";
    case ShapeKind::plane:
      return "plane";
  }
  return "box";
}

Shape shape_from(const json& e) {
  Shape s;
  const std::string kind = e.at("shape").get<std::string>();
  s.center = vec3(e.at("center"));
  if (kind == "box") {
    s.kind = ShapeKind::box;
    s.size = vec3(e.at("size"));
    if (!(s.size.minCoeff() > 0.0)) throw InputError("box sizes must be positive");
  } else if (kind == "sphere") {
    s.kind = ShapeKind::sphere;
    s.radius = e.at("radius").get<double>();
    if (!(s.radius > 0.0)) throw InputError("sphere radius must be positive");
  } else if (kind == "plane") {
    s.kind = ShapeKind::plane;
    const auto& sz = e.at("size");
    s.size = Vec3(sz.at(0).get<double>(), sz.at(1).get<double>(), 0.0);
    if (!(s.size.x() > 0.0 && s.size.y() > 0.0)) throw InputError("plane sizes must be positive");
  } else {
    throw InputError("unknown shape \"" + kind + "\"");
  }
  return s;
}

json shape_to_json(const Shape& s) {
  json j = {{"shape", kind_name(s.kind)}, {"center", to_json(s.center)}};
  if (s.kind == ShapeKind::sphere) {
    j["radius"] = s.radius;
  } else if (s.kind == ShapeKind::plane) {
    j["size"] = json::array({s.size.x(), s.size.y()});
  } else {
    j["size"] = to_json(s.size);
  }
  return j;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

Vec3 closest_point(const Shape& s, const Vec3& p) {
  return p.cwiseMax(s.min_corner()).cwiseMin(s.max_corner());
}

double surface_distance(const Shape& s, const Vec3& p) {
  if (s.kind == ShapeKind::sphere) return std::abs((p - s.center).norm() - s.radius);
  const Vec3 lo = s.min_corner();
  const Vec3 hi = s.max_corner();
  const Vec3 q = closest_point(s, p);
  const double outside = (p - q).norm();
  if (outside > 0.0 || s.kind == ShapeKind::plane) return outside;
  const Vec3 a = p - lo;
  const Vec3 b = hi - p;
  return std::min(a.minCoeff(), b.minCoeff());
}

enum class Contact { none, touching, overlapping };

struct ContactInfo {
  Contact kind = Contact::none;
  Vec3 normal = Vec3::Zero();  // from b toward a
};

ContactInfo contact(const Shape& a, const Shape& b, double tol) {
  ContactInfo info;
  const bool sa = a.kind == ShapeKind::sphere;
  const bool sb = b.kind == ShapeKind::sphere;
  if (sa && sb) {
    const Vec3 d = a.center - b.center;
    const double gap = d.norm() - a.radius - b.radius;
    if (gap < -tol) info.kind = Contact::overlapping;
    else if (gap <= tol) info.kind = Contact::touching;
    info.normal = d.normalized();
    return info;
  }
  if (sa || sb) {
    const Shape& sphere = sa ? a : b;
    const Shape& box = sa ? b : a;
    const Vec3 q = closest_point(box, sphere.center);
    const Vec3 d = sphere.center - q;
    const double dist = d.norm();
    if (dist < sphere.radius - tol) info.kind = Contact::overlapping;
    else if (dist <= sphere.radius + tol) info.kind = Contact::touching;
    const Vec3 n = dist > 0.0 ? Vec3(d / dist) : Vec3::UnitZ();
    info.normal = sa ? n : Vec3(-n);
    return info;
  }
  if (a.kind == ShapeKind::plane && b.kind == ShapeKind::plane) return info;
  const Vec3 gap = (a.min_corner() - b.max_corner()).cwiseMax(b.min_corner() - a.max_corner());
  int axis = 0;
  const double g = gap.maxCoeff(&axis);
  // Only the axes along which the shapes overlap matter for a plane, whose
  // zero thickness would otherwise always read as touching.
  if (g < -tol) info.kind = Contact::overlapping;
  else if (g <= tol) info.kind = Contact::touching;
  if (info.kind == Contact::touching && std::abs(gap.z()) <= tol) axis = 2;
  info.normal = Vec3::Zero();
  info.normal[axis] = a.center[axis] >= b.center[axis] ? 1.0 : -1.0;
  return info;
}

}  // namespace

Vec3 Shape::min_corner() const {
  if (kind == ShapeKind::sphere) return center - Vec3::Constant(radius);
  return center - size / 2.0;
}

Vec3 Shape::max_corner() const {
  if (kind == ShapeKind::sphere) return center + Vec3::Constant(radius);
  return center + size / 2.0;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SceneSpec SceneSpec::from_json(const json& j) {
  SceneSpec spec;
  try {
    spec.name = j.value("name", "scene");
    const auto& k = j.at("intrinsics");
    spec.intrinsics.focal = k.at("f").get<double>();
    spec.intrinsics.cx = k.at("cx").get<double>();
    spec.intrinsics.cy = k.at("cy").get<double>();
    spec.intrinsics.width = k.at("w").get<int>();
    spec.intrinsics.height = k.at("h").get<int>();
    spec.intrinsics.validate();
    spec.touch_tolerance = j.value("touch_tolerance", 1e-6);
    spec.jitter_deg = j.value("jitter_deg", 0.0);
    for (const auto& e : j.at("entities")) {
      spec.entities.emplace_back(e.at("name").get<std::string>(), shape_from(e));
    }
    const auto& t = j.at("trajectory");
    const std::string type = t.at("type").get<std::string>();
    if (type == "orbit") {
      const Vec3 center = vec3(t.at("center"));
      const double radius = t.at("radius").get<double>();
      const double height = t.at("height").get<double>();
      const int frames = t.at("frames").get<int>();
      const double start = t.value("start_deg", 0.0);
      const double sweep = t.value("sweep_deg", 360.0);
      const double height_swing = t.value("height_swing", 0.0);
      if (frames < 1) throw InputError("orbit needs at least one frame");
      for (int i = 0; i < frames; ++i) {
        const double a = (start + sweep * i / frames) * std::numbers::pi / 180.0;
        const double h = height + height_swing * std::sin(2.0 * a);
        const Vec3 eye = center + Vec3(radius * std::cos(a), radius * std::sin(a), h);
        spec.trajectory.push_back(look_at(eye, center));
      }
    } else if (type == "waypoints") {
      for (const auto& p : t.at("poses")) {
        spec.trajectory.push_back(look_at(vec3(p.at("eye")), vec3(p.at("target"))));
      }
    } else {
      throw InputError("unknown trajectory type \"" + type + "\"");
    }
    if (spec.trajectory.empty()) throw InputError("trajectory is empty");
    if (j.contains("expected_relations")) {
      for (const auto& r : j.at("expected_relations")) {
        spec.expected.push_back(
            {r.at(0).get<std::string>(), r.at(1).get<std::string>(), r.at(2).get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("scene spec: ") + e.what());
  }
  return spec;
}

SceneSpec SceneSpec::load(const fs::path& path) { return from_json(read_json_file(path)); }

SyntheticScene generate(std::uint64_t seed, const SceneSpec& spec) {
  constexpr std::size_t kColors = std::size(kPalette);
  if (spec.entities.empty()) throw InputError("scene spec has no entities");
  if (spec.entities.size() > kColors) throw InputError("scene spec has too many entities");
  std::set<std::string> names;
  for (const auto& [name, shape] : spec.entities) {
    if (!names.insert(name).second) throw InputError("duplicate entity name \"" + name + "\"");
  }

  SyntheticScene scene;
  scene.name = spec.name;
  scene.intrinsics = spec.intrinsics;

  SimRandom rng(splitmix64(seed));
  std::vector<std::size_t> order(kColors);
  for (std::size_t i = 0; i < kColors; ++i) order[i] = i;
  for (std::size_t i = kColors - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  for (std::size_t i = 0; i < spec.entities.size(); ++i) {
    Entity e;
    e.id = static_cast<std::uint32_t>(i + 1);
    e.name = spec.entities[i].first;
    e.shape = spec.entities[i].second;
    e.color = kPalette[order[i]];
    scene.entities.push_back(e);
  }

  for (std::size_t i = 0; i < scene.entities.size(); ++i) {
    for (std::size_t j = i + 1; j < scene.entities.size(); ++j) {
      const Entity& a = scene.entities[i];
      const Entity& b = scene.entities[j];
      const ContactInfo c = contact(a.shape, b.shape, spec.touch_tolerance);
      if (c.kind == Contact::overlapping) {
        throw InputError("entities \"" + a.name + "\" and \"" + b.name + "\" overlap");
      }
      if (c.kind != Contact::touching) continue;
      if (c.normal.z() > 0.7) {
        scene.relations.push_back({a.name, "on", b.name});
      } else if (c.normal.z() < -0.7) {
        scene.relations.push_back({b.name, "on", a.name});
      } else {
        scene.relations.push_back({a.name, "next to", b.name});
      }
    }
  }
  std::sort(scene.relations.begin(), scene.relations.end());

  for (std::size_t f = 0; f < spec.trajectory.size(); ++f) {
    Pose pose = spec.trajectory[f];
    if (spec.jitter_deg > 0.0) {
      SimRandom jr(splitmix64(seed ^ splitmix64(0x51ed270b + f)));
      const Vec3 axis = Vec3(jr.uniform() - 0.5, jr.uniform() - 0.5, jr.uniform() - 0.5);
      const double angle = (2.0 * jr.uniform() - 1.0) * spec.jitter_deg * std::numbers::pi / 180.0;
      if (axis.norm() > 0.0) {
        const Mat3 r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
        pose = Pose(pose.rotation() * r, pose.translation());
      }
    }
    scene.trajectory.push_back(pose);
  }
  return scene;
}

std::uint32_t SyntheticScene::entity_at(const Vec3& point, double tolerance) const {
  std::uint32_t best = 0;
  double best_d = tolerance;
  for (const auto& e : entities) {
    const double d = surface_distance(e.shape, point);
    if (d <= best_d) {
      if (best == 0 || d < best_d) best = e.id;
      best_d = d;
    }
  }
  return best;
}

std::vector<NamedColor> SyntheticScene::palette() const {
  std::vector<NamedColor> out;
  for (const auto& e : entities) out.push_back({e.name, e.color});
  return out;
}

json SyntheticScene::to_json() const {
  json ents = json::array();
  for (const auto& e : entities) {
    json j = shape_to_json(e.shape);
    j["id"] = e.id;
    j["name"] = e.name;
    j["color"] = json::array({e.color.r, e.color.g, e.color.b});
    ents.push_back(std::move(j));
  }
  json rels = json::array();
  for (const auto& r : relations) rels.push_back(json::array({r.subject, r.relation, r.object}));
  return {{"name", name},
          {"intrinsics",
           {{"f", intrinsics.focal},
            {"cx", intrinsics.cx},
            {"cy", intrinsics.cy},
            {"w", intrinsics.width},
            {"h", intrinsics.height}}},
          {"entities", ents},
          {"relations", rels}};
}

SyntheticScene SyntheticScene::from_json(const json& j) {
  SyntheticScene s;
  try {
    s.name = j.value("name", "scene");
    const auto& k = j.at("intrinsics");
    s.intrinsics = {k.at("f").get<double>(), k.at("cx").get<double>(), k.at("cy").get<double>(),
                    k.at("w").get<int>(), k.at("h").get<int>()};
    for (const auto& e : j.at("entities")) {
      Entity ent;
      ent.id = e.at("id").get<std::uint32_t>();
      ent.name = e.at("name").get<std::string>();
      ent.shape = shape_from(e);
      const auto& c = e.at("color");
      ent.color = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(),
                   c.at(2).get<std::uint8_t>()};
      s.entities.push_back(ent);
    }
    for (const auto& r : j.at("relations")) {
      s.relations.push_back(
          {r.at(0).get<std::string>(), r.at(1).get<std::string>(), r.at(2).get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("scene json: ") + e.what());
  }
  return s;
}

std::optional<double> intersect(const Shape& s, const Vec3& o, const Vec3& d) {
  if (s.kind == ShapeKind::sphere) {
    const Vec3 oc = o - s.center;
    const double a = d.dot(d);
    const double b = oc.dot(d);
    const double c = oc.dot(oc) - s.radius * s.radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    double t = (-b - root) / a;
    if (!(t > 0.0)) t = (-b + root) / a;
    if (!(t > 0.0)) return std::nullopt;
    return t;
  }
  if (s.kind == ShapeKind::plane) {
    if (d.z() == 0.0) return std::nullopt;
    const double t = (s.center.z() - o.z()) / d.z();
    if (!(t > 0.0)) return std::nullopt;
    const Vec3 p = o + t * d;
    if (std::abs(p.x() - s.center.x()) > s.size.x() / 2.0 ||
        std::abs(p.y() - s.center.y()) > s.size.y() / 2.0) {
      return std::nullopt;
    }
    return t;
  }
  const Vec3 lo = s.min_corner();
  const Vec3 hi = s.max_corner();
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < lo[k] || o[k] > hi[k]) return std::nullopt;
      continue;
    }
    double t1 = (lo[k] - o[k]) / d[k];
    double t2 = (hi[k] - o[k]) / d[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || !(t_far > 0.0)) return std::nullopt;
  return t_near > 0.0 ? t_near : t_far;
}

std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin,
                               const Vec3& direction) {
  std::optional<RayHit> best;
  for (const auto& e : scene.entities) {
    const auto t = intersect(e.shape, origin, direction);
    if (t && (!best || *t < best->t)) best = RayHit{*t, e.id};
  }
  return best;
}

CleanFrame render_clean(const SyntheticScene& scene, const Pose& pose) {
  const CameraIntrinsics& k = scene.intrinsics;
  CleanFrame f;
  f.color = RgbImage(k.width, k.height);
  f.depth = DepthImage(k.width, k.height, 0.0);
  f.entity_ids = IdImage(k.width, k.height, 0);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 ray_cam((u - k.cx) / k.focal, (v - k.cy) / k.focal, 1.0);
      const auto hit = cast_ray(scene, pose.translation(), pose.rotation() * ray_cam);
      if (!hit) continue;
      f.depth.at(u, v) = hit->t;
      f.entity_ids.at(u, v) = hit->entity;
      f.color.at(u, v) = scene.entities[hit->entity - 1].color;
    }
  }
  return f;
}

void NoiseSpec::validate() const {
  for (double p : {swap_probability, drop_probability, detector_recall}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("noise: probabilities must lie in [0, 1]");
  }
  if (!(confidence_jitter >= 0.0)) throw InputError("noise: jitter must be non-negative");
}

NoiseSpec NoiseSpec::from_json(const json& j) {
  NoiseSpec n;
  try {
    n.swap_probability = j.value("swap_probability", 0.0);
    n.boundary_radius = j.value("boundary_radius", 0);
    n.drop_probability = j.value("drop_probability", 0.0);
    n.confidence_jitter = j.value("confidence_jitter", 0.0);
    n.detector_recall = j.value("detector_recall", 0.0);
  } catch (const json::exception& e) {
    throw InputError(std::string("noise spec: ") + e.what());
  }
  n.validate();
  return n;
}

NoiseSpec NoiseSpec::load(const fs::path& path) { return from_json(read_json_file(path)); }

SegmentationFrame corrupt(const IdImage& entity_ids, const NoiseSpec& noise, std::uint64_t seed,
                          int frame, std::map<std::uint32_t, SegmentId>& previous_ids) {
  noise.validate();
  SimRandom rng(splitmix64(seed ^ splitmix64(2 * static_cast<std::uint64_t>(frame) + 1)));
  std::set<std::uint32_t> present;
  for (const auto id : entity_ids.pixels()) {
    if (id != 0) present.insert(id);
  }

  IdImage ids = entity_ids;
  std::set<std::uint32_t> dropped;
  for (const auto e : present) {
    if (rng.uniform() < noise.drop_probability) dropped.insert(e);
  }
  if (!dropped.empty()) {
    for (auto& id : ids.pixels()) {
      if (dropped.count(id)) id = 0;
    }
  }

  const int r = noise.boundary_radius;
  if (r != 0) {
    std::map<std::uint32_t, double> priority;
    for (const auto e : present) priority[e] = rng.uniform();
    const IdImage src = ids;
    const int rr = std::abs(r);
    for (int v = 0; v < src.height(); ++v) {
      for (int u = 0; u < src.width(); ++u) {
        const std::uint32_t own = src.at(u, v);
        std::uint32_t best = own;
        bool uniform_disc = true;
        for (int dv = -rr; dv <= rr; ++dv) {
          for (int du = -rr; du <= rr; ++du) {
            if (du * du + dv * dv > rr * rr) continue;
            const int x = u + du;
            const int y = v + dv;
            if (x < 0 || y < 0 || x >= src.width() || y >= src.height()) continue;
            const std::uint32_t other = src.at(x, y);
            if (other != own) uniform_disc = false;
            if (r > 0 && other != 0 && (best == 0 || priority[other] > priority[best])) {
              best = other;
            }
          }
        }
        ids.at(u, v) = r > 0 ? best : (uniform_disc ? own : 0);
      }
    }
  }

  std::set<std::uint32_t> survivors;
  for (const auto id : ids.pixels()) {
    if (id != 0) survivors.insert(id);
  }
  std::map<std::uint32_t, SegmentId> assigned;
  std::set<SegmentId> used(survivors.begin(), survivors.end());
  std::vector<std::uint32_t> swapped;
  for (const auto e : survivors) {
    if (rng.uniform() < noise.swap_probability) {
      swapped.push_back(e);
      used.erase(e);
    } else {
      assigned[e] = e;
    }
  }
  for (const auto e : swapped) {
    const auto prev = previous_ids.find(e);
    SegmentId fresh = 0;
    do {
      fresh = static_cast<SegmentId>(1 + rng.below(65535));
    } while (used.count(fresh) || (prev != previous_ids.end() && prev->second == fresh));
    used.insert(fresh);
    assigned[e] = fresh;
  }

  SegmentationFrame seg;
  seg.ids = IdImage(ids.width(), ids.height(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != 0) seg.ids[i] = assigned[ids[i]];
  }
  for (const auto& [e, s] : assigned) {
    const double jitter = noise.confidence_jitter * (2.0 * rng.uniform() - 1.0);
    seg.confidence[s] = std::clamp(0.94 + jitter, 0.0, 1.0);
    previous_ids[e] = s;
  }
  return seg;
}

void render_frames(const SyntheticScene& scene, const NoiseSpec& noise, std::uint64_t seed,
                   const fs::path& out) {
  noise.validate();
  if (scene.trajectory.empty()) throw InputError("scene has an empty trajectory");
  fs::create_directories(out / "gt");
  std::vector<FrameEntry> poses;
  std::map<std::uint32_t, SegmentId> previous;
  for (std::size_t f = 0; f < scene.trajectory.size(); ++f) {
    const int index = static_cast<int>(f);
    const Pose& pose = scene.trajectory[f];
    const CleanFrame clean = render_clean(scene, pose);
    KeyframeRecord rec;
    rec.index = index;
    rec.pose = pose;
    rec.color = clean.color;
    rec.depth = clean.depth;
    rec.segmentation = corrupt(clean.entity_ids, noise, seed, index, previous);
    write_frame(out, rec);

    Gray16Image gt(clean.entity_ids.width(), clean.entity_ids.height());
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = static_cast<std::uint16_t>(clean.entity_ids[i]);
    write_gray16_png(out / "gt" / frame_name(index, ".png"), gt);

    if (noise.detector_recall > 0.0) {
      SimRandom rng(splitmix64(seed ^ splitmix64(2 * static_cast<std::uint64_t>(f) + 2)));
      SegmentationFrame det;
      det.ids = IdImage(gt.width(), gt.height(), 0);
      std::map<std::uint32_t, SegmentId> dense;
      std::set<std::uint32_t> present;
      for (const auto id : clean.entity_ids.pixels()) {
        if (id != 0) present.insert(id);
      }
      for (const auto e : present) {
        if (rng.uniform() < noise.detector_recall) {
          const SegmentId s = static_cast<SegmentId>(dense.size() + 1);
          dense[e] = s;
          det.confidence[s] = 0.96;
          det.detector_label[s] = scene.entities[e - 1].name;
        }
      }
      for (std::size_t i = 0; i < det.ids.size(); ++i) {
        const auto it = dense.find(clean.entity_ids[i]);
        if (it != dense.end()) det.ids[i] = it->second;
      }
      fs::create_directories(out / "seg_det");
      write_segmentation(out / "seg_det" / frame_name(index, ".png"),
                         out / "seg_det" / frame_name(index, ".json"), det);
    }
    poses.push_back({index, pose});
  }
  write_poses(out / "poses.txt", poses);
  write_intrinsics(out / "intrinsics.json", scene.intrinsics);
  std::ofstream(out / "scene.json") << scene.to_json().dump(2) << "\n";
}

}  // namespace semfuse
