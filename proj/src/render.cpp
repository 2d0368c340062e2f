#include "semfuse/render.hpp"

#include <algorithm>
#include <cmath>

namespace semfuse {

namespace {

struct PixelState {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  double transmittance = 1.0;
  double semantic_transmittance = 1.0;
  std::vector<LabelMass> masses;  // unsorted while compositing

  void reset() {
    color.setZero();
    depth = 0.0;
    transmittance = 1.0;
    semantic_transmittance = 1.0;
    masses.clear();
  }

  // Returns the semantic weight conf * alpha * T_s assigned to the splat.
  double add(const Splat& s, double alpha) {
    const double w = alpha * transmittance;
    color += s.color * w;
    depth += s.z * w;
    transmittance *= 1.0 - alpha;
    if (s.label == kUnlabeled) return 0.0;
    const double ca = s.confidence * alpha;
    const double ws = ca * semantic_transmittance;
    semantic_transmittance *= 1.0 - ca;
    if (ws > 0.0) {
      auto it = std::find_if(masses.begin(), masses.end(),
                             [&](const LabelMass& m) { return m.label == s.label; });
      if (it == masses.end()) {
        masses.push_back({s.label, ws});
      } else {
        it->mass += ws;
      }
    }
    return ws;
  }

  bool saturated(double min_transmittance) const {
    return transmittance < min_transmittance && semantic_transmittance < min_transmittance;
  }
};

class FrameWriter {
 public:
  FrameWriter(const CameraIntrinsics& intrinsics, RenderedFrame& frame) : frame_(frame) {
    const int w = intrinsics.width;
    const int h = intrinsics.height;
    frame_.color = ColorImage(w, h, Vec3::Zero());
    frame_.depth = DepthImage(w, h, 0.0);
    frame_.alpha = DepthImage(w, h, 0.0);
    frame_.labels = LabelImage(w, h, kUnlabeled);
    pixel_masses_.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  }

  void store(std::size_t pixel, PixelState& state) {
    frame_.color[pixel] = state.color;
    frame_.depth[pixel] = state.depth;
    frame_.alpha[pixel] = 1.0 - state.transmittance;
    std::sort(state.masses.begin(), state.masses.end(),
              [](const LabelMass& a, const LabelMass& b) { return a.label < b.label; });
    LabelId best = kUnlabeled;
    double best_mass = 0.0;
    for (const auto& m : state.masses) {
      if (m.mass > best_mass) {
        best = m.label;
        best_mass = m.mass;
      }
    }
    frame_.labels[pixel] = best;
    pixel_masses_[pixel] = state.masses;
  }

  void finish() {
    frame_.mass_offsets.assign(pixel_masses_.size() + 1, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < pixel_masses_.size(); ++i) {
      frame_.mass_offsets[i] = static_cast<std::uint32_t>(total);
      total += pixel_masses_[i].size();
    }
    frame_.mass_offsets.back() = static_cast<std::uint32_t>(total);
    frame_.masses.clear();
    frame_.masses.reserve(total);
    for (const auto& m : pixel_masses_) frame_.masses.insert(frame_.masses.end(), m.begin(), m.end());
  }

 private:
  RenderedFrame& frame_;
  std::vector<std::vector<LabelMass>> pixel_masses_;
};

struct Contribution {
  std::uint32_t splat = 0;
  double weight = 0.0;
};

// Shared tiled loop. When `numerator`/`denominator` are given, accumulates
// sum_p w * R_p^(label) and sum_p w per input primitive.
RenderedFrame render_tiled(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                           const CameraIntrinsics& intrinsics, const RenderOptions& options,
                           std::vector<double>* numerator, std::vector<double>* denominator) {
  intrinsics.validate();
  if (options.tile_size < 1) throw InputError("render: tile size must be >= 1");
  RenderedFrame frame;
  FrameWriter writer(intrinsics, frame);

  std::vector<Splat> splats = make_splats(primitives, pose, intrinsics);
  std::sort(splats.begin(), splats.end(), splat_before);

  const int w = intrinsics.width;
  const int h = intrinsics.height;
  const int ts = options.tile_size;
  const int tiles_x = (w + ts - 1) / ts;
  const int tiles_y = (h + ts - 1) / ts;
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * tiles_y;

  struct Box {
    int tx0, tx1, ty0, ty1;
  };
  std::vector<Box> boxes(splats.size());
  std::vector<std::uint32_t> offsets(tile_count + 1, 0);
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Splat& s = splats[i];
    const double r = 3.0 * s.sigma;
    const double u0 = std::floor(s.u - r) - 1.0;
    const double u1 = std::ceil(s.u + r) + 1.0;
    const double v0 = std::floor(s.v - r) - 1.0;
    const double v1 = std::ceil(s.v + r) + 1.0;
    if (u1 < 0.0 || v1 < 0.0 || u0 > w - 1 || v0 > h - 1) {
      boxes[i] = {0, -1, 0, -1};
      continue;
    }
    const int pu0 = static_cast<int>(std::max(u0, 0.0));
    const int pu1 = static_cast<int>(std::min(u1, static_cast<double>(w - 1)));
    const int pv0 = static_cast<int>(std::max(v0, 0.0));
    const int pv1 = static_cast<int>(std::min(v1, static_cast<double>(h - 1)));
    boxes[i] = {pu0 / ts, pu1 / ts, pv0 / ts, pv1 / ts};
    for (int ty = boxes[i].ty0; ty <= boxes[i].ty1; ++ty) {
      for (int tx = boxes[i].tx0; tx <= boxes[i].tx1; ++tx) {
        ++offsets[static_cast<std::size_t>(ty) * tiles_x + tx + 1];
      }
    }
  }
  for (std::size_t t = 0; t < tile_count; ++t) offsets[t + 1] += offsets[t];
  std::vector<std::uint32_t> lists(offsets.back());
  {
    std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < splats.size(); ++i) {
      for (int ty = boxes[i].ty0; ty <= boxes[i].ty1; ++ty) {
        for (int tx = boxes[i].tx0; tx <= boxes[i].tx1; ++tx) {
          lists[cursor[static_cast<std::size_t>(ty) * tiles_x + tx]++] =
              static_cast<std::uint32_t>(i);
        }
      }
    }
  }

  const bool want_contributions = numerator != nullptr;
  if (want_contributions) {
    numerator->assign(primitives.size(), 0.0);
    denominator->assign(primitives.size(), 0.0);
  }

  // Splat-major within a tile: every pixel still sees its splats in sorted
  // order, but pixels outside a splat's box are never visited.
  const std::size_t tile_pixels = static_cast<std::size_t>(ts) * static_cast<std::size_t>(ts);
  std::vector<PixelState> states(tile_pixels);
  std::vector<std::uint8_t> done(tile_pixels);
  std::vector<std::vector<Contribution>> contributions(want_contributions ? tile_pixels : 0);
  std::vector<double> gx(static_cast<std::size_t>(ts));
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const std::size_t t = static_cast<std::size_t>(ty) * tiles_x + tx;
      const int u_begin = tx * ts;
      const int v_begin = ty * ts;
      const int v_end = std::min(h, v_begin + ts);
      const int u_end = std::min(w, u_begin + ts);
      for (auto& st : states) st.reset();
      std::fill(done.begin(), done.end(), 0);
      for (auto& c : contributions) c.clear();

      for (std::uint32_t k = offsets[t]; k < offsets[t + 1]; ++k) {
        const std::uint32_t si = lists[k];
        const Splat& s = splats[si];
        const double r = 3.0 * s.sigma;
        const int u0 = std::max(u_begin, static_cast<int>(std::max(std::ceil(s.u - r) - 1.0, -1.0)));
        const int u1 = std::min(u_end - 1, static_cast<int>(std::min(std::floor(s.u + r) + 1.0, 1e9)));
        const int v0 = std::max(v_begin, static_cast<int>(std::max(std::ceil(s.v - r) - 1.0, -1.0)));
        const int v1 = std::min(v_end - 1, static_cast<int>(std::min(std::floor(s.v + r) + 1.0, 1e9)));
        if (u0 > u1 || v0 > v1) continue;
        for (int u = u0; u <= u1; ++u) {
          const double dx = u - s.u;
          gx[static_cast<std::size_t>(u - u_begin)] = std::exp(-(dx * dx) / s.two_sigma2);
        }
        for (int v = v0; v <= v1; ++v) {
          const double dy = v - s.v;
          const double dy2 = dy * dy;
          if (dy2 > s.radius2) continue;
          const double gy = std::exp(-dy2 / s.two_sigma2);
          const std::size_t row = static_cast<std::size_t>(v - v_begin) * static_cast<std::size_t>(ts);
          for (int u = u0; u <= u1; ++u) {
            const double dx = u - s.u;
            if (dx * dx + dy2 > s.radius2) continue;
            const std::size_t lp = row + static_cast<std::size_t>(u - u_begin);
            if (done[lp]) continue;
            double alpha = s.opacity * (gx[static_cast<std::size_t>(u - u_begin)] * gy);
            if (alpha < kAlphaCull) continue;
            PixelState& state = states[lp];
            const double ws = state.add(s, alpha);
            if (want_contributions && ws > 0.0) contributions[lp].push_back({si, ws});
            if (options.min_transmittance > 0.0 && state.saturated(options.min_transmittance)) {
              done[lp] = 1;
            }
          }
        }
      }

      for (int v = v_begin; v < v_end; ++v) {
        for (int u = u_begin; u < u_end; ++u) {
          const std::size_t lp = static_cast<std::size_t>(v - v_begin) * static_cast<std::size_t>(ts) +
                                 static_cast<std::size_t>(u - u_begin);
          PixelState& state = states[lp];
          if (want_contributions) {
            for (const auto& c : contributions[lp]) {
              const Splat& sp = splats[c.splat];
              double rm = 0.0;
              for (const auto& m : state.masses) {
                if (m.label == sp.label) rm = m.mass;
              }
              (*numerator)[sp.index] += c.weight * rm;
              (*denominator)[sp.index] += c.weight;
            }
          }
          writer.store(frame.labels.index(u, v), state);
        }
      }
    }
  }
  writer.finish();
  return frame;
}

}  // namespace

double RenderedFrame::mass_of(std::size_t pixel, LabelId label) const {
  for (const auto& m : mass_at(pixel)) {
    if (m.label == label) return m.mass;
  }
  return 0.0;
}

std::vector<Splat> make_splats(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                               const CameraIntrinsics& intrinsics) {
  std::vector<Splat> splats;
  splats.reserve(primitives.size());
  const Mat3 rt = pose.rotation().transpose();
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const GaussianPrimitive& p = primitives[i];
    const Vec3 c = rt * (p.position - pose.translation());
    if (!(c.z() > 0.0)) continue;
    Splat s;
    s.index = static_cast<std::uint32_t>(i);
    s.id = p.id;
    s.z = c.z();
    s.u = intrinsics.focal * c.x() / c.z() + intrinsics.cx;
    s.v = intrinsics.focal * c.y() / c.z() + intrinsics.cy;
    s.sigma = intrinsics.focal * static_cast<double>(p.scale) / c.z();
    if (!(s.sigma > 0.0) || !std::isfinite(s.u) || !std::isfinite(s.v)) continue;
    s.radius2 = 9.0 * s.sigma * s.sigma;
    s.two_sigma2 = 2.0 * s.sigma * s.sigma;
    s.opacity = p.opacity;
    s.confidence = p.confidence;
    s.label = p.label;
    s.color = Vec3(p.color.r, p.color.g, p.color.b) / 255.0;
    splats.push_back(s);
  }
  return splats;
}

double splat_alpha(const Splat& s, double px, double py) {
  const double dx = px - s.u;
  const double dy = py - s.v;
  const double dy2 = dy * dy;
  if (dx * dx + dy2 > s.radius2) return 0.0;
  const double alpha =
      s.opacity * (std::exp(-(dx * dx) / s.two_sigma2) * std::exp(-dy2 / s.two_sigma2));
  return alpha < kAlphaCull ? 0.0 : alpha;
}

bool splat_before(const Splat& a, const Splat& b) {
  if (a.z != b.z) return a.z < b.z;
  return a.id < b.id;
}

RenderedFrame render(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                     const CameraIntrinsics& intrinsics, const RenderOptions& options) {
  return render_tiled(primitives, pose, intrinsics, options, nullptr, nullptr);
}

RenderedFrame render(const SemanticMap& map, const Pose& pose, const CameraIntrinsics& intrinsics,
                     const RenderOptions& options) {
  return render(map.primitives(), pose, intrinsics, options);
}

RenderedFrame render_reference(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                               const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  RenderedFrame frame;
  FrameWriter writer(intrinsics, frame);
  const std::vector<Splat> splats = make_splats(primitives, pose, intrinsics);

  PixelState state;
  std::vector<const Splat*> covering;
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      covering.clear();
      for (const Splat& s : splats) {
        if (splat_alpha(s, u, v) > 0.0) covering.push_back(&s);
      }
      std::sort(covering.begin(), covering.end(),
                [](const Splat* a, const Splat* b) { return splat_before(*a, *b); });
      state.reset();
      for (const Splat* s : covering) state.add(*s, splat_alpha(*s, u, v));
      writer.store(frame.labels.index(u, v), state);
    }
  }
  writer.finish();
  return frame;
}

RenderWithContributions render_with_contributions(std::span<const GaussianPrimitive> primitives,
                                                  const Pose& pose,
                                                  const CameraIntrinsics& intrinsics,
                                                  const RenderOptions& options) {
  RenderWithContributions out;
  std::vector<double> numerator;
  std::vector<double> denominator;
  out.frame = render_tiled(primitives, pose, intrinsics, options, &numerator, &denominator);
  out.contributions.assign(primitives.size(), 0.0);
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    if (denominator[i] > 0.0) {
      out.contributions[i] =
          std::clamp(numerator[i] / (denominator[i] + options.epsilon), 0.0, 1.0);
    }
  }
  return out;
}

ContributionTable contribution_factors(const SemanticMap& map, const Pose& pose,
                                       const CameraIntrinsics& intrinsics,
                                       const RenderOptions& options) {
  return render_with_contributions(map.primitives(), pose, intrinsics, options).contributions;
}

}  // namespace semfuse
