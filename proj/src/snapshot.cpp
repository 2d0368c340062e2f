#include "semfuse/snapshot.hpp"

#include "semfuse/frame_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace semfuse {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes little endian");

namespace {

constexpr int kSnapshotVersion = 1;
constexpr std::size_t kVertexBytes = 3 * 8 + 4 + 4 + 3 + 4 + 4;

const char* const kPlyProperties =
    "property double x\n"
    "property double y\n"
    "property double z\n"
    "property float scale\n"
    "property float opacity\n"
    "property uchar red\n"
    "property uchar green\n"
    "property uchar blue\n"
    "property uint label\n"
    "property float confidence\n";

template <typename T>
void put(char*& out, T value) {
  std::memcpy(out, &value, sizeof(T));
  out += sizeof(T);
}

template <typename T>
T take(const char*& in) {
  T value;
  std::memcpy(&value, in, sizeof(T));
  in += sizeof(T);
  return value;
}

json intrinsics_json(const CameraIntrinsics& k) {
  return {{"f", k.focal}, {"cx", k.cx}, {"cy", k.cy}, {"w", k.width}, {"h", k.height}};
}

}  // namespace

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_map_ply(const fs::path& path, const SemanticMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\ncomment semfuse map\n"
      << "element vertex " << map.size() << "\n"
      << kPlyProperties << "end_header\n";
  std::vector<char> buf(map.size() * kVertexBytes);
  char* p = buf.data();
  for (const auto& g : map.primitives()) {
    put(p, g.position.x());
    put(p, g.position.y());
    put(p, g.position.z());
    put(p, g.scale);
    put(p, g.opacity);
    put(p, g.color.r);
    put(p, g.color.g);
    put(p, g.color.b);
    put(p, static_cast<std::uint32_t>(g.label));
    put(p, g.confidence);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw InputError("short write to " + path.string());
}

std::vector<GaussianPrimitive> read_map_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw InputError(path.string() + ": not a PLY file");
  std::size_t count = 0;
  bool have_count = false;
  std::string properties;
  bool binary = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    if (line.rfind("format ", 0) == 0) {
      binary = line == "format binary_little_endian 1.0";
    } else if (line.rfind("element vertex ", 0) == 0) {
      std::istringstream s(line.substr(15));
      if (!(s >> count)) throw InputError(path.string() + ": bad vertex count");
      have_count = true;
    } else if (line.rfind("property ", 0) == 0) {
      properties += line + "\n";
    } else if (line.rfind("element ", 0) == 0) {
      throw InputError(path.string() + ": unexpected element");
    }
  }
  if (!binary || !have_count || properties != kPlyProperties) {
    throw InputError(path.string() + ": unsupported PLY layout");
  }
  std::vector<char> buf(count * kVertexBytes);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw InputError(path.string() + ": truncated vertex data");
  }
  std::vector<GaussianPrimitive> out(count);
  const char* p = buf.data();
  for (std::size_t i = 0; i < count; ++i) {
    GaussianPrimitive& g = out[i];
    g.id = static_cast<PrimitiveId>(i);
    const double x = take<double>(p);
    const double y = take<double>(p);
    const double z = take<double>(p);
    g.position = Vec3(x, y, z);
    g.scale = take<float>(p);
    g.opacity = take<float>(p);
    g.color.r = take<std::uint8_t>(p);
    g.color.g = take<std::uint8_t>(p);
    g.color.b = take<std::uint8_t>(p);
    g.label = take<std::uint32_t>(p);
    g.confidence = take<float>(p);
  }
  return out;
}

json buffer_manifest(const MemoryBuffer& buffer) {
  json entries = json::array();
  for (const auto& e : buffer.entries()) {
    entries.push_back({{"keyframe", e.keyframe.index},
                       {"pose", format_pose(e.keyframe.pose)},
                       {"r_in", e.r_in},
                       {"r_overlap", e.r_overlap}});
  }
  return {{"entries", entries}};
}

void write_snapshot(const fs::path& dir, const SemanticMap& map, const SceneGraph& graph,
                    const MemoryBuffer& buffer, const CameraIntrinsics& intrinsics,
                    const json& config) {
  fs::create_directories(dir);
  write_map_ply(dir / "map.ply", map);
  write_json(dir / "graph.json", graph.to_json());
  write_json(dir / "buffer.json", buffer_manifest(buffer));
  write_json(dir / "snapshot.json", {{"format", "semfuse-snapshot"},
                                     {"version", kSnapshotVersion},
                                     {"primitives", map.size()},
                                     {"next_label", map.labels().next()},
                                     {"intrinsics", intrinsics_json(intrinsics)},
                                     {"map", "map.ply"},
                                     {"graph", "graph.json"},
                                     {"buffer", "buffer.json"},
                                     {"config", config}});
}

MapSnapshot load_snapshot(const fs::path& path) {
  const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
  const json meta = read_json(dir / "snapshot.json");
  MapSnapshot s;
  try {
    if (meta.at("format") != "semfuse-snapshot") throw InputError("not a snapshot");
    if (meta.at("version").get<int>() != kSnapshotVersion) {
      throw InputError("unsupported snapshot version");
    }
    const auto& k = meta.at("intrinsics");
    s.intrinsics = {k.at("f").get<double>(), k.at("cx").get<double>(), k.at("cy").get<double>(),
                    k.at("w").get<int>(), k.at("h").get<int>()};
    auto prims = read_map_ply(dir / meta.at("map").get<std::string>());
    if (prims.size() != meta.at("primitives").get<std::size_t>()) {
      throw InputError("snapshot: primitive count mismatch");
    }
    s.map.insert(std::move(prims));
    s.map.labels().restore(meta.at("next_label").get<LabelId>());
    s.graph = SceneGraph::from_json(read_json(dir / meta.at("graph").get<std::string>()));
    const json buf = read_json(dir / meta.at("buffer").get<std::string>());
    for (const auto& e : buf.at("entries")) {
      s.buffer.push_back({e.at("keyframe").get<int>(), parse_pose(e.at("pose").get<std::string>()),
                          e.at("r_in").get<double>(), e.at("r_overlap").get<double>()});
    }
    s.config = meta.value("config", json::object());
  } catch (const json::exception& e) {
    throw InputError(std::string("snapshot: ") + e.what());
  }
  return s;
}

}  // namespace semfuse
