#pragma once

#include "semfuse/memory_buffer.hpp"
#include "semfuse/scene_graph.hpp"
#include "semfuse/semantic_map.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace semfuse {

// Binary little-endian PLY with per-vertex x, y, z (double), scale,
// opacity (float), red, green, blue (uchar), label (uint), confidence (float).
void write_map_ply(const std::filesystem::path& path, const SemanticMap& map);
// Reads primitives back in file order; the label registry is not touched.
std::vector<GaussianPrimitive> read_map_ply(const std::filesystem::path& path);

struct BufferManifestEntry {
  int keyframe = 0;
  Pose pose;
  double r_in = 0.0;
  double r_overlap = 0.0;
};

nlohmann::json buffer_manifest(const MemoryBuffer& buffer);

struct MapSnapshot {
  SemanticMap map;
  SceneGraph graph;
  CameraIntrinsics intrinsics;
  std::vector<BufferManifestEntry> buffer;
  nlohmann::json config;
};

// Writes map.ply, graph.json, buffer.json and snapshot.json into `dir`.
void write_snapshot(const std::filesystem::path& dir, const SemanticMap& map,
                    const SceneGraph& graph, const MemoryBuffer& buffer,
                    const CameraIntrinsics& intrinsics, const nlohmann::json& config);

// `path` is the snapshot directory or its snapshot.json.
MapSnapshot load_snapshot(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace semfuse
