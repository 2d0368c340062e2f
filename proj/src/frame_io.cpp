#include "semfuse/frame_io.hpp"

#include "semfuse/ingest.hpp"
#include "semfuse/png_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace semfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string frame_name(int index, const std::string& extension) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return std::string(buf) + extension;
}

CameraIntrinsics read_intrinsics(const fs::path& path) {
  const json j = read_json(path);
  CameraIntrinsics k;
  try {
    k.focal = j.at("f").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("w").get<int>();
    k.height = j.at("h").get<int>();
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  k.validate();
  return k;
}

void write_intrinsics(const fs::path& path, const CameraIntrinsics& k) {
  json j = {{"f", k.focal}, {"cx", k.cx}, {"cy", k.cy}, {"w", k.width}, {"h", k.height}};
  write_text(path, j.dump(2) + "\n");
}

Pose parse_pose(const std::string& text) {
  std::istringstream in(text);
  double v[7];
  for (double& x : v) {
    if (!(in >> x)) throw InputError("pose: expected 7 numbers \"tx ty tz qx qy qz qw\"");
  }
  std::string extra;
  if (in >> extra) throw InputError("pose: trailing input \"" + extra + "\"");
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError("pose: non-finite value");
  }
  return Pose::from_quaternion(Vec3(v[0], v[1], v[2]), v[3], v[4], v[5], v[6]);
}

std::string format_pose(const Pose& pose) {
  const Eigen::Quaterniond q = pose.quaternion();
  const Vec3& t = pose.translation();
  return fmt_double(t.x()) + " " + fmt_double(t.y()) + " " + fmt_double(t.z()) + " " +
         fmt_double(q.x()) + " " + fmt_double(q.y()) + " " + fmt_double(q.z()) + " " +
         fmt_double(q.w());
}

std::vector<FrameEntry> read_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("no frames: cannot open " + path.string());
  std::vector<FrameEntry> frames;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    FrameEntry e;
    std::string rest;
    if (!(ls >> e.index)) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad frame index");
    }
    std::getline(ls, rest);
    try {
      e.pose = parse_pose(rest);
    } catch (const InputError& err) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + err.what());
    }
    frames.push_back(e);
  }
  return frames;
}

void write_poses(const fs::path& path, const std::vector<FrameEntry>& frames) {
  std::string text;
  for (const auto& f : frames) text += std::to_string(f.index) + " " + format_pose(f.pose) + "\n";
  write_text(path, text);
}

SegmentationFrame read_segmentation(const fs::path& png, const fs::path& json_path) {
  SegmentationFrame seg;
  const Gray16Image ids = read_gray16_png(png);
  seg.ids = IdImage(ids.width(), ids.height());
  for (std::size_t i = 0; i < ids.size(); ++i) seg.ids[i] = ids[i];
  const json j = read_json(json_path);
  try {
    for (const auto& s : j.at("segments")) {
      const auto id = s.at("id").get<SegmentId>();
      seg.confidence[id] = s.at("confidence").get<double>();
      if (s.contains("label")) seg.detector_label[id] = s.at("label").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw InputError(json_path.string() + ": " + e.what());
  }
  seg.validate();
  return seg;
}

void write_segmentation(const fs::path& png, const fs::path& json_path,
                        const SegmentationFrame& seg) {
  Gray16Image ids(seg.ids.width(), seg.ids.height());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (seg.ids[i] > 0xffff) throw InputError("segment id exceeds 16 bits");
    ids[i] = static_cast<std::uint16_t>(seg.ids[i]);
  }
  write_gray16_png(png, ids);
  json segments = json::array();
  for (const auto& [id, conf] : seg.confidence) {
    json s = {{"id", id}, {"confidence", conf}};
    if (auto it = seg.detector_label.find(id); it != seg.detector_label.end()) {
      s["label"] = it->second;
    }
    segments.push_back(std::move(s));
  }
  write_text(json_path, json{{"segments", segments}}.dump(1) + "\n");
}

DepthImage read_depth_mm(const fs::path& path) {
  const Gray16Image raw = read_gray16_png(path);
  DepthImage depth(raw.width(), raw.height());
  for (std::size_t i = 0; i < raw.size(); ++i) depth[i] = raw[i] / 1000.0;
  return depth;
}

void write_depth_mm(const fs::path& path, const DepthImage& depth) {
  Gray16Image raw(depth.width(), depth.height());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double mm = std::round(depth[i] * 1000.0);
    raw[i] = (mm > 0.0 && mm <= 65535.0) ? static_cast<std::uint16_t>(mm) : 0;
  }
  write_gray16_png(path, raw);
}

void write_frame(const fs::path& root, const KeyframeRecord& frame) {
  for (const char* sub : {"color", "depth", "seg"}) fs::create_directories(root / sub);
  write_rgb_png(root / "color" / frame_name(frame.index, ".png"), frame.color);
  write_depth_mm(root / "depth" / frame_name(frame.index, ".png"), frame.depth);
  write_segmentation(root / "seg" / frame_name(frame.index, ".png"),
                     root / "seg" / frame_name(frame.index, ".json"), frame.segmentation);
}

FrameSequence FrameSequence::open(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("no frames: " + root.string() + " is not a directory");
  FrameSequence seq;
  seq.root_ = root;
  if (!fs::exists(root / "poses.txt")) throw InputError("no frames in " + root.string());
  seq.frames_ = read_poses(root / "poses.txt");
  if (seq.frames_.empty()) throw InputError("no frames in " + root.string());
  seq.intrinsics_ = read_intrinsics(root / "intrinsics.json");
  return seq;
}

bool FrameSequence::has_detector() const { return fs::is_directory(root_ / "seg_det"); }

KeyframeRecord FrameSequence::load(int frame_index, double overlap_threshold) const {
  KeyframeRecord rec;
  rec.index = frame_index;
  bool found = false;
  for (const auto& f : frames_) {
    if (f.index == frame_index) {
      rec.pose = f.pose;
      found = true;
      break;
    }
  }
  if (!found) throw InputError("frame " + std::to_string(frame_index) + " not in poses.txt");
  try {
    rec.color = read_rgb_png(root_ / "color" / frame_name(frame_index, ".png"));
    rec.depth = read_depth_mm(root_ / "depth" / frame_name(frame_index, ".png"));
    rec.segmentation = read_segmentation(root_ / "seg" / frame_name(frame_index, ".png"),
                                         root_ / "seg" / frame_name(frame_index, ".json"));
    const fs::path det_png = root_ / "seg_det" / frame_name(frame_index, ".png");
    if (fs::exists(det_png)) {
      const SegmentationFrame det =
          read_segmentation(det_png, root_ / "seg_det" / frame_name(frame_index, ".json"));
      rec.segmentation = fuse_masks(rec.segmentation, det, overlap_threshold);
    } else {
      // Dense renumbering matches the fused path.
      rec.segmentation = fuse_masks(rec.segmentation, SegmentationFrame{}, overlap_threshold);
    }
    rec.validate(intrinsics_);
  } catch (const InputError& e) {
    throw InputError("frame " + std::to_string(frame_index) + ": " + e.what());
  }
  return rec;
}

}  // namespace semfuse
