#pragma once

#include "semfuse/semantic_map.hpp"
#include "semfuse/types.hpp"

#include <span>
#include <vector>

namespace semfuse {

struct LabelMass {
  LabelId label = kUnlabeled;
  double mass = 0.0;

  bool operator==(const LabelMass&) const = default;
};

using ColorImage = Image<Vec3>;  // linear RGB in [0, 1]

struct RenderedFrame {
  ColorImage color;
  DepthImage depth;   // sum of z * alpha * T, not normalized by coverage
  DepthImage alpha;   // 1 - final color transmittance
  LabelImage labels;  // argmax of the semantic masses, 0 where no mass
  // Per-pixel sparse masses in CSR form, entries ascending by label.
  std::vector<std::uint32_t> mass_offsets;
  std::vector<LabelMass> masses;

  std::span<const LabelMass> mass_at(std::size_t pixel) const {
    return {masses.data() + mass_offsets[pixel], masses.data() + mass_offsets[pixel + 1]};
  }
  double mass_of(std::size_t pixel, LabelId label) const;
};

struct RenderOptions {
  int tile_size = 16;
  // Stop compositing a pixel once both color and semantic transmittance fall
  // below this value. 0 disables early termination.
  double min_transmittance = 0.0;
  double epsilon = 1e-8;  // contribution ratio denominator guard
};

// Screen-space splat of one primitive.
struct Splat {
  std::uint32_t index = 0;  // position in the input span
  PrimitiveId id = 0;
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  double sigma = 0.0;
  double radius2 = 0.0;     // (3 sigma)^2
  double two_sigma2 = 0.0;  // 2 sigma^2
  double opacity = 0.0;
  double confidence = 0.0;
  LabelId label = kUnlabeled;
  Vec3 color = Vec3::Zero();
};

inline constexpr double kAlphaCull = 1.0 / 255.0;

// Projects every primitive in front of the camera. Unsorted.
std::vector<Splat> make_splats(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                               const CameraIntrinsics& intrinsics);

// Alpha of a splat at pixel center (px, py); 0 outside the footprint or
// below the cull threshold. The Gaussian is evaluated as the product of its
// two axis factors, which lets the rasterizer share them across a row.
double splat_alpha(const Splat& s, double px, double py);

bool splat_before(const Splat& a, const Splat& b);

// Tiled rasterizer (performance path).
RenderedFrame render(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                     const CameraIntrinsics& intrinsics, const RenderOptions& options = {});
RenderedFrame render(const SemanticMap& map, const Pose& pose, const CameraIntrinsics& intrinsics,
                     const RenderOptions& options = {});

// Per-pixel reference: every pixel sorts every covering splat on its own.
RenderedFrame render_reference(std::span<const GaussianPrimitive> primitives, const Pose& pose,
                               const CameraIntrinsics& intrinsics);

// P_conf per primitive, indexed by position in the input span (by id for a
// SemanticMap). Primitives contributing to no pixel get 0.
using ContributionTable = std::vector<double>;

struct RenderWithContributions {
  RenderedFrame frame;
  ContributionTable contributions;
};

RenderWithContributions render_with_contributions(std::span<const GaussianPrimitive> primitives,
                                                  const Pose& pose,
                                                  const CameraIntrinsics& intrinsics,
                                                  const RenderOptions& options = {});

ContributionTable contribution_factors(const SemanticMap& map, const Pose& pose,
                                       const CameraIntrinsics& intrinsics,
                                       const RenderOptions& options = {});

}  // namespace semfuse
