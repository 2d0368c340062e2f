#pragma once

#include "semfuse/types.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

struct RandomScene {
  semfuse::CameraIntrinsics intrinsics{60.0, 31.5, 31.5, 64, 64};
  semfuse::Pose pose;
  std::vector<semfuse::GaussianPrimitive> primitives;
};

// Up to `max_primitives` splats in front of a random camera, a few behind
// it, footprints from sub-pixel to about a quarter of the image.
inline RandomScene random_scene(std::mt19937_64& rng, int max_primitives) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RandomScene s;
  const semfuse::Vec3 eye(unit(rng) * 2 - 1, unit(rng) * 2 - 1, unit(rng) * 2 - 1);
  const semfuse::Vec3 target = eye + semfuse::Vec3(unit(rng) - 0.5, unit(rng) - 0.5, 1.0).normalized();
  s.pose = semfuse::look_at(eye, target, semfuse::Vec3::UnitY());
  const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_primitives));
  for (int i = 0; i < n; ++i) {
    semfuse::GaussianPrimitive p;
    p.id = static_cast<semfuse::PrimitiveId>(i);
    const double z = unit(rng) < 0.1 ? -0.5 - unit(rng) : 0.5 + 3.0 * unit(rng);
    const double u = -8.0 + 80.0 * unit(rng);
    const double v = -8.0 + 80.0 * unit(rng);
    const semfuse::Vec3 cam((u - s.intrinsics.cx) * z / s.intrinsics.focal,
                            (v - s.intrinsics.cy) * z / s.intrinsics.focal, z);
    p.position = s.pose.to_world(cam);
    const double sigma_px = 0.4 + 5.0 * unit(rng);
    p.scale = static_cast<float>(sigma_px * std::abs(z) / s.intrinsics.focal);
    p.opacity = static_cast<float>(0.05 + 0.95 * unit(rng));
    p.color = {static_cast<std::uint8_t>(rng() % 256), static_cast<std::uint8_t>(rng() % 256),
               static_cast<std::uint8_t>(rng() % 256)};
    p.label = static_cast<semfuse::LabelId>(rng() % 5);
    p.confidence = p.label == 0 ? 0.0f : static_cast<float>(unit(rng));
    s.primitives.push_back(p);
  }
  return s;
}

}  // namespace oracle
