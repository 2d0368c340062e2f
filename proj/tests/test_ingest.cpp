#include "semfuse/ingest.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace semfuse;

namespace {

SegmentationFrame blank(int w, int h) {
  SegmentationFrame s;
  s.ids = IdImage(w, h, 0);
  return s;
}

void paint(SegmentationFrame& s, SegmentId id, int u0, int v0, int u1, int v1, double conf = 0.9) {
  for (int v = v0; v < std::min(v1, s.ids.height()); ++v) {
    for (int u = u0; u < std::min(u1, s.ids.width()); ++u) s.ids.at(u, v) = id;
  }
  s.confidence[id] = conf;
}

std::size_t area(const SegmentationFrame& s, SegmentId id) {
  std::size_t n = 0;
  for (const auto x : s.ids.pixels()) n += x == id;
  return n;
}

}  // namespace

TEST(FuseMasks, EmptyDetectorRenumbersGrid) {
  SegmentationFrame grid = blank(20, 10);
  paint(grid, 7, 0, 0, 5, 5);
  paint(grid, 3, 10, 0, 15, 5);
  const SegmentationFrame out = fuse_masks(grid, SegmentationFrame{}, 0.7);
  EXPECT_EQ(out.present_ids(), (std::vector<SegmentId>{1, 2}));
  EXPECT_EQ(out.ids.at(12, 2), 1u);  // grid id 3 comes first
  EXPECT_EQ(out.ids.at(2, 2), 2u);
  EXPECT_DOUBLE_EQ(out.confidence.at(1), 0.9);
}

TEST(FuseMasks, GridSegmentInsideDetectorIsDropped) {
  SegmentationFrame grid = blank(20, 20);
  paint(grid, 1, 2, 2, 6, 6);
  SegmentationFrame det = blank(20, 20);
  paint(det, 9, 0, 0, 10, 10, 0.95);
  const SegmentationFrame out = fuse_masks(grid, det, 0.7);
  EXPECT_EQ(out.present_ids(), (std::vector<SegmentId>{1}));
  EXPECT_EQ(area(out, 1), 100u);
  EXPECT_DOUBLE_EQ(out.confidence.at(1), 0.95);
}

TEST(FuseMasks, PartialOverlapBelowThresholdKeepsBoth) {
  SegmentationFrame grid = blank(30, 30);
  paint(grid, 1, 0, 0, 10, 10);  // 100 px
  SegmentationFrame det = blank(30, 30);
  paint(det, 1, 7, 0, 20, 10);  // claims 30 of them
  const SegmentationFrame out = fuse_masks(grid, det, 0.7);
  EXPECT_EQ(out.present_ids(), (std::vector<SegmentId>{1, 2}));
  EXPECT_EQ(area(out, 1), 130u);
  EXPECT_EQ(area(out, 2), 70u);  // detector pixels are never overwritten
}

TEST(FuseMasks, OutputIsAPartitionOfTheUnion) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    SegmentationFrame grid = blank(32, 32);
    SegmentationFrame det = blank(32, 32);
    for (SegmentId id = 1; id <= 6; ++id) {
      const int u = static_cast<int>(rng() % 28), v = static_cast<int>(rng() % 28);
      paint(grid, id, u, v, u + 1 + static_cast<int>(rng() % 8), v + 1 + static_cast<int>(rng() % 8));
    }
    for (SegmentId id = 1; id <= 3; ++id) {
      const int u = static_cast<int>(rng() % 24), v = static_cast<int>(rng() % 24);
      paint(det, id, u, v, u + 2 + static_cast<int>(rng() % 10), v + 2 + static_cast<int>(rng() % 10));
    }
    const SegmentationFrame out = fuse_masks(grid, det, 0.7);
    ASSERT_NO_THROW(out.validate());
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
      if (det.ids[i] != 0) ASSERT_NE(out.ids[i], 0u);
      if (out.ids[i] != 0) ASSERT_TRUE(det.ids[i] != 0 || grid.ids[i] != 0);
    }
    const auto present = out.present_ids();
    for (std::size_t k = 0; k < present.size(); ++k) ASSERT_EQ(present[k], k + 1);
  }
}

TEST(SelectKeyframe, Thresholds) {
  const FusionConfig cfg;
  const Pose origin;
  EXPECT_TRUE(select_keyframe(origin, std::nullopt, cfg));
  EXPECT_FALSE(select_keyframe(origin, origin, cfg));
  EXPECT_TRUE(select_keyframe(Pose(Mat3::Identity(), Vec3(0.15, 0, 0)), origin, cfg));
  EXPECT_FALSE(select_keyframe(Pose(Mat3::Identity(), Vec3(0.05, 0, 0)), origin, cfg));
  const Mat3 turn = Eigen::AngleAxisd(15.0 * M_PI / 180.0, Vec3::UnitY()).toRotationMatrix();
  EXPECT_TRUE(select_keyframe(Pose(turn, Vec3::Zero()), origin, cfg));
}

TEST(RescaleConfidence, MapsSegmenterRange) {
  EXPECT_DOUBLE_EQ(rescale_confidence(0.88), 0.5);
  EXPECT_DOUBLE_EQ(rescale_confidence(1.0), 1.0);
  EXPECT_NEAR(rescale_confidence(0.94), 0.75, 1e-12);
  EXPECT_DOUBLE_EQ(rescale_confidence(0.2), 0.5);
}

namespace {

const CameraIntrinsics kCam{100.0, 15.5, 15.5, 32, 32};

KeyframeRecord frame_with(const SegmentationFrame& seg, double depth) {
  KeyframeRecord k;
  k.color = RgbImage(32, 32, Rgb8{10, 20, 30});
  k.depth = DepthImage(32, 32, depth);
  k.segmentation = seg;
  return k;
}

}  // namespace

TEST(InitPrimitives, StrideSamplesBlock) {
  SegmentationFrame seg = blank(32, 32);
  paint(seg, 5, 4, 4, 8, 8, 0.94);
  FusionConfig cfg;
  cfg.stride = 2;
  const auto groups = init_primitives(frame_with(seg, 1.0), kCam, cfg);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].primitives.size(), 4u);
  EXPECT_NEAR(groups[0].confidence, 0.75, 1e-12);
  for (const auto& p : groups[0].primitives) {
    EXPECT_EQ(p.label, 5u);
    EXPECT_FLOAT_EQ(p.confidence, 0.75f);
    EXPECT_FLOAT_EQ(p.scale, static_cast<float>(cfg.scale_multiplier * 2 * 1.0 / kCam.focal));
  }
}

TEST(InitPrimitives, SegmentWithoutDepthYieldsNoGroup) {
  SegmentationFrame seg = blank(32, 32);
  paint(seg, 1, 0, 0, 8, 8);
  EXPECT_TRUE(init_primitives(frame_with(seg, 0.0), kCam, FusionConfig{}).empty());
}

TEST(InitPrimitives, PlanePatchCentroid) {
  SegmentationFrame seg = blank(32, 32);
  paint(seg, 1, 8, 8, 24, 24);
  FusionConfig cfg;
  cfg.stride = 2;
  KeyframeRecord k = frame_with(seg, 1.0);
  k.pose = Pose(Mat3::Identity(), Vec3(0.3, -0.2, 0.5));
  const auto groups = init_primitives(k, kCam, cfg);
  ASSERT_EQ(groups.size(), 1u);
  Vec3 sum = Vec3::Zero();
  for (const auto& p : groups[0].primitives) sum += p.position;
  const Vec3 centroid = sum / static_cast<double>(groups[0].primitives.size());
  // Sampled columns and rows are 8, 10, ..., 22: mean 15.
  const Vec3 expected = Vec3((15.0 - kCam.cx) / kCam.focal, (15.0 - kCam.cy) / kCam.focal, 1.0) +
                        Vec3(0.3, -0.2, 0.5);
  EXPECT_LE((centroid - expected).norm(), 1e-6);
}

TEST(InitPrimitives, RejectsMismatchedImages) {
  SegmentationFrame seg = blank(16, 16);
  EXPECT_THROW(init_primitives(frame_with(seg, 1.0), kCam, FusionConfig{}), InputError);
}
