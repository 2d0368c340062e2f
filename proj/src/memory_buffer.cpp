#include "semfuse/memory_buffer.hpp"

#include "semfuse/confidence.hpp"
#include "semfuse/geometry.hpp"
#include "semfuse/local_opt.hpp"

#include <cmath>

namespace semfuse {

double frustum_ratio(const std::vector<Vec3>& world_points, const Pose& view,
                     const CameraIntrinsics& intrinsics) {
  if (world_points.empty()) return 1.0;
  const double tan_h = std::tan(intrinsics.horizontal_fov() / 2.0);
  const double tan_v = std::tan(intrinsics.vertical_fov() / 2.0);
  std::size_t inside = 0;
  for (const Vec3& w : world_points) {
    const Vec3 c = view.to_camera(w);
    if (!(c.z() > 0.0)) continue;
    if (std::abs(c.x() / c.z()) <= tan_h && std::abs(c.y() / c.z()) <= tan_v) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(world_points.size());
}

double MemoryBuffer::overlap_ratio(const std::vector<Vec3>& points, double radius) const {
  if (points.empty()) return 1.0;
  std::size_t hits = 0;
  for (const Vec3& p : points) {
    if (aggregate_.any_within_strict(p, radius)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(points.size());
}

Admission MemoryBuffer::admit(const KeyframeRecord& candidate, const CameraIntrinsics& intrinsics,
                              double tau_long, double search_radius) {
  MemoryEntry entry;
  entry.cloud = back_project(candidate.depth, intrinsics, candidate.pose, &entry.pixels);
  Admission result;
  if (entry.cloud.empty()) {
    result.r_in = 1.0;
    result.r_overlap = 1.0;
    return result;
  }
  if (entries_.empty()) {
    result.admitted = true;
  } else {
    result.r_in = frustum_ratio(entry.cloud, entries_.back().keyframe.pose, intrinsics);
    result.r_overlap = overlap_ratio(entry.cloud, search_radius);
    result.admitted = result.r_in < tau_long && result.r_overlap < tau_long;
  }
  if (!result.admitted) return result;

  entry.keyframe = candidate;
  entry.r_in = result.r_in;
  entry.r_overlap = result.r_overlap;
  aggregate_points_.insert(aggregate_points_.end(), entry.cloud.begin(), entry.cloud.end());
  entries_.push_back(std::move(entry));
  aggregate_ = KdTree(aggregate_points_);
  return result;
}

ConsistencyResult consistency(const LabelImage& rendered, const SegmentationFrame& segmentation) {
  if (!rendered.same_shape(segmentation.ids)) {
    throw InputError("consistency: rendered labels and segmentation differ in size");
  }
  std::map<SegmentId, std::map<LabelId, std::size_t>> votes;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const SegmentId s = segmentation.ids[i];
    if (s == 0) continue;
    auto& v = votes[s];
    if (rendered[i] != kUnlabeled) ++v[rendered[i]];
  }
  std::map<SegmentId, LabelId> remap;
  for (const auto& [segment, counts] : votes) {
    LabelId best = kUnlabeled;
    std::size_t best_count = 0;
    for (const auto& [label, count] : counts) {
      if (count > best_count) {
        best = label;
        best_count = count;
      }
    }
    remap[segment] = best;
  }

  ConsistencyResult out;
  out.remapped = LabelImage(rendered.width(), rendered.height(), kUnlabeled);
  std::map<LabelId, std::pair<std::size_t, std::size_t>> counts;  // (intersection, union)
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const SegmentId s = segmentation.ids[i];
    const LabelId m = s == 0 ? kUnlabeled : remap[s];
    out.remapped[i] = m;
    const LabelId r = rendered[i];
    if (m != kUnlabeled && m == r) {
      ++counts[m].first;
      ++counts[m].second;
      continue;
    }
    if (m != kUnlabeled) ++counts[m].second;
    if (r != kUnlabeled) ++counts[r].second;
  }
  for (const auto& [label, c] : counts) {
    out.class_iou[label] =
        c.second == 0 ? 0.0 : static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  out.pixel_confidence = Image<double>(rendered.width(), rendered.height(), 0.0);
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (rendered[i] != kUnlabeled) out.pixel_confidence[i] = out.class_iou[rendered[i]];
  }
  return out;
}

LongtermReport longterm_update(SemanticMap& map, const MemoryBuffer& buffer,
                               const CameraIntrinsics& intrinsics, const LongtermConfig& config) {
  LongtermReport report;
  if (map.empty()) return report;

  struct Association {
    double p_sum = 0.0;
    std::size_t count = 0;
    std::vector<LabelId> labels;
  };

  for (const MemoryEntry& entry : buffer.entries()) {
    ++report.entries;
    const auto rendered =
        render_with_contributions(map.primitives(), entry.keyframe.pose, intrinsics, config.render);
    const ConsistencyResult cons = consistency(rendered.frame.labels, entry.keyframe.segmentation);

    std::map<PrimitiveId, Association> assoc;
    const auto labeled = [&](std::uint32_t id) { return map[id].label != kUnlabeled; };
    for (std::size_t k = 0; k < entry.cloud.size(); ++k) {
      const auto nb = map.index().nearest(entry.cloud[k], config.search_radius, labeled);
      if (!nb) continue;
      const std::size_t pixel = entry.pixels[k];
      Association& a = assoc[nb->id];
      a.p_sum += cons.pixel_confidence[pixel];
      ++a.count;
      a.labels.push_back(cons.remapped[pixel]);
    }

    for (const auto& [id, a] : assoc) {
      const double p2d = a.p_sum / static_cast<double>(a.count);
      const double pconf = rendered.contributions[id];
      const LabelId observed = majority_label(a.labels);
      const double conf = map[id].confidence;
      double updated = conf;
      if (observed == map[id].label) {
        updated = raise_confidence(conf, p2d * pconf);
        ++report.raised;
      } else {
        updated = lower_confidence(conf, p2d * (1.0 - pconf));
        ++report.lowered;
      }
      map.set_confidence(id, static_cast<float>(updated));
    }
  }
  return report;
}

}  // namespace semfuse
