#pragma once

#include "semfuse/sim.hpp"
#include "semfuse/snapshot.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace support {

namespace fs = std::filesystem;

inline fs::path source_dir() { return SEMFUSE_SOURCE_DIR; }
inline fs::path cli() { return SEMFUSE_CLI; }
inline fs::path scene_spec(const std::string& name) {
  return source_dir() / "data" / "scenes" / (name + ".json");
}
inline fs::path noise_spec(const std::string& name) {
  return source_dir() / "data" / "noise" / (name + ".json");
}

// Fresh, empty directory under the build tree.
inline fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(SEMFUSE_SCRATCH_DIR) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline semfuse::SyntheticScene simulate(const semfuse::SceneSpec& spec, const std::string& noise,
                                        std::uint64_t seed, const fs::path& out) {
  const semfuse::SyntheticScene scene = semfuse::generate(seed, spec);
  semfuse::render_frames(scene, semfuse::NoiseSpec::load(noise_spec(noise)), seed, out);
  return scene;
}

inline semfuse::SyntheticScene simulate(const std::string& scene, const std::string& noise,
                                        std::uint64_t seed, const fs::path& out) {
  return simulate(semfuse::SceneSpec::load(scene_spec(scene)), noise, seed, out);
}

// Runs the CLI with `args`, output appended to `log`. Returns the exit code.
inline int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli().string() + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Empty string when `document` validates against the graph schema.
inline std::string graph_schema_errors(const std::string& document) {
  rapidjson::Document schema_doc;
  schema_doc.Parse(read_file(source_dir() / "schemas" / "graph.schema.json").c_str());
  if (schema_doc.HasParseError()) return "schema does not parse";
  const rapidjson::SchemaDocument schema(schema_doc);
  rapidjson::Document doc;
  doc.Parse(document.c_str());
  if (doc.HasParseError()) {
    return std::string("document does not parse: ") + rapidjson::GetParseError_En(doc.GetParseError());
  }
  rapidjson::SchemaValidator validator(schema);
  if (doc.Accept(validator)) return {};
  rapidjson::StringBuffer where;
  validator.GetInvalidDocumentPointer().StringifyUriFragment(where);
  return std::string("invalid at ") + where.GetString() + " (" +
         validator.GetInvalidSchemaKeyword() + ")";
}

}  // namespace support
