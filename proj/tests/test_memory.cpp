#include "semfuse/confidence.hpp"
#include "semfuse/geometry.hpp"
#include "semfuse/memory_buffer.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace semfuse;

namespace {

const CameraIntrinsics kCam{32.0, 15.5, 15.5, 32, 32};

KeyframeRecord flat_frame(const Pose& pose, double depth, int index = 1) {
  KeyframeRecord k;
  k.index = index;
  k.pose = pose;
  k.color = RgbImage(kCam.width, kCam.height);
  k.depth = DepthImage(kCam.width, kCam.height, depth);
  k.segmentation.ids = IdImage(kCam.width, kCam.height, 1);
  k.segmentation.confidence[1] = 0.9;
  return k;
}

Pose yaw(double degrees) {
  return Pose(Eigen::AngleAxisd(degrees * M_PI / 180.0, Vec3::UnitY()).toRotationMatrix(), Vec3::Zero());
}

}  // namespace

TEST(MemoryBuffer, FirstAdmittedIdenticalRejected) {
  MemoryBuffer buffer;
  const KeyframeRecord k = flat_frame(Pose(), 2.0);
  EXPECT_TRUE(buffer.admit(k, kCam, 0.5, 0.1).admitted);
  const Admission again = buffer.admit(k, kCam, 0.5, 0.1);
  EXPECT_FALSE(again.admitted);
  EXPECT_EQ(again.r_in, 1.0);
  EXPECT_EQ(buffer.size(), 1u);
}

TEST(MemoryBuffer, OpposedViewIsAdmitted) {
  MemoryBuffer buffer;
  buffer.admit(flat_frame(Pose(), 2.0), kCam, 0.5, 0.1);
  const Admission a = buffer.admit(flat_frame(yaw(180.0), 2.0, 2), kCam, 0.5, 0.1);
  EXPECT_LT(a.r_in, 0.05);
  EXPECT_TRUE(a.admitted);
  EXPECT_EQ(buffer.size(), 2u);
  EXPECT_EQ(buffer.aggregate_size(), 2u * kCam.width * kCam.height);
}

TEST(MemoryBuffer, EmptyCandidateRejectedWithUnitRatios) {
  MemoryBuffer buffer;
  const Admission a = buffer.admit(flat_frame(Pose(), 0.0), kCam, 0.5, 0.1);
  EXPECT_FALSE(a.admitted);
  EXPECT_EQ(a.r_in, 1.0);
  EXPECT_EQ(a.r_overlap, 1.0);
}

TEST(MemoryBuffer, FrustumRatioOfHalfVisibleCloud) {
  // Points straight ahead and straight behind: exactly half inside.
  std::vector<Vec3> pts{Vec3(0, 0, 1), Vec3(0, 0, 2), Vec3(0, 0, -1), Vec3(0, 0, -2)};
  EXPECT_DOUBLE_EQ(frustum_ratio(pts, Pose(), kCam), 0.5);
  EXPECT_DOUBLE_EQ(frustum_ratio({}, Pose(), kCam), 1.0);
}

TEST(MemoryBuffer, OverlapMatchesBruteForceOverAggregate) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MemoryBuffer buffer;
  std::vector<Vec3> all;
  for (int i = 0; i < 8; ++i) {
    KeyframeRecord k = flat_frame(yaw(45.0 * i), 1.0, i + 1);
    for (auto& d : k.depth.pixels()) d = unit(rng) < 0.2 ? 0.0 : 0.5 + 2.0 * unit(rng);
    const auto cloud = back_project(k.depth, kCam, k.pose);
    std::size_t strict = 0;
    for (const Vec3& p : cloud) {
      for (const Vec3& q : all) {
        if (squared_distance(p, q) < 0.1 * 0.1) {
          ++strict;
          break;
        }
      }
    }
    const Admission a = buffer.admit(k, kCam, 0.5, 0.1);
    if (i > 0) {
      EXPECT_EQ(a.r_overlap, static_cast<double>(strict) / static_cast<double>(cloud.size()));
    }
    if (a.admitted) all.insert(all.end(), cloud.begin(), cloud.end());
  }
  ASSERT_GT(buffer.size(), 1u);
  EXPECT_EQ(buffer.aggregate_size(), all.size());
  std::vector<Vec3> queries(2000);
  for (auto& q : queries) q = Vec3(4 * unit(rng) - 2, 4 * unit(rng) - 2, 4 * unit(rng) - 2);
  for (const double r : {0.02, 0.1, 0.3}) {
    std::size_t hits = 0;
    for (const Vec3& p : queries) {
      for (const Vec3& q : all) {
        if (squared_distance(p, q) < r * r) {
          ++hits;
          break;
        }
      }
    }
    EXPECT_EQ(buffer.overlap_ratio(queries, r), static_cast<double>(hits) / queries.size());
  }
}

TEST(Consistency, PerfectAgreementScoresOne) {
  LabelImage rendered(8, 8, 0);
  SegmentationFrame seg;
  seg.ids = IdImage(8, 8, 0);
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      rendered.at(u, v) = u < 4 ? 3 : 5;
      seg.ids.at(u, v) = u < 4 ? 1 : 2;
    }
  }
  const auto c = consistency(rendered, seg);
  EXPECT_EQ(c.class_iou.at(3), 1.0);
  EXPECT_EQ(c.class_iou.at(5), 1.0);
  EXPECT_EQ(c.class_iou.count(4), 0u);
  EXPECT_EQ(c.remapped, rendered);
}

TEST(Consistency, SquareHalfCoveredIsOneThird) {
  LabelImage rendered(30, 30, 0);
  SegmentationFrame seg;
  seg.ids = IdImage(30, 30, 0);
  for (int v = 0; v < 10; ++v) {
    for (int u = 0; u < 10; ++u) rendered.at(u, v) = 7;
  }
  // Segment: 50 px inside the square plus 50 px of background.
  for (int v = 0; v < 5; ++v) {
    for (int u = 0; u < 10; ++u) seg.ids.at(u, v) = 1;
  }
  for (int v = 20; v < 25; ++v) {
    for (int u = 0; u < 10; ++u) seg.ids.at(u, v) = 1;
  }
  const auto c = consistency(rendered, seg);
  EXPECT_DOUBLE_EQ(c.class_iou.at(7), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(c.pixel_confidence.at(3, 3), 50.0 / 150.0);
  EXPECT_EQ(c.pixel_confidence.at(25, 25), 0.0);
}

TEST(LongtermRule, HandValuesAndZeroFactor) {
  EXPECT_NEAR(raise_confidence(0.5, 0.6 * 0.5), 0.65, 1e-12);
  EXPECT_NEAR(lower_confidence(0.5, 0.6 * (1.0 - 0.5)), 0.35, 1e-12);
  EXPECT_EQ(raise_confidence(0.42, 0.0 * 0.9), 0.42);
  EXPECT_EQ(lower_confidence(0.42, 0.0 * 0.1), 0.42);
}

// One primitive per pixel on a plane at depth 1, label 1 on the left half and
// label 2 on the right. The buffered segmentation splits at column 20, so the
// label-2 strip in columns 16..19 is observed as label 1.
TEST(LongtermUpdate, RaisesConsistentLowersInconsistentNeverRelabels) {
  SemanticMap map;
  std::vector<GaussianPrimitive> prims;
  for (int v = 0; v < kCam.height; ++v) {
    for (int u = 0; u < kCam.width; ++u) {
      GaussianPrimitive p;
      p.position = back_project_pixel(u, v, 1.0, kCam, Pose());
      p.scale = 0.5f / 32.0f;
      p.opacity = 0.9f;
      p.label = u < 16 ? 1 : 2;
      p.confidence = 0.5f;
      prims.push_back(p);
    }
  }
  map.insert(prims);
  KeyframeRecord k = flat_frame(Pose(), 1.0);
  for (int v = 0; v < kCam.height; ++v) {
    for (int u = 0; u < kCam.width; ++u) k.segmentation.ids.at(u, v) = u < 20 ? 10 : 11;
  }
  k.segmentation.confidence = {{10, 0.9}, {11, 0.9}};
  MemoryBuffer buffer;
  ASSERT_TRUE(buffer.admit(k, kCam, 0.5, 0.1).admitted);

  const LongtermReport r = longterm_update(map, buffer, kCam, LongtermConfig{});
  EXPECT_EQ(r.entries, 1u);
  EXPECT_EQ(r.lowered, 4u * kCam.height);
  for (const auto& p : map.primitives()) {
    const int u = static_cast<int>(p.id % kCam.width);
    EXPECT_EQ(p.label, u < 16 ? 1u : 2u);
    if (u >= 16 && u < 20) {
      EXPECT_LT(p.confidence, 0.5f);
    } else {
      EXPECT_GT(p.confidence, 0.5f);
    }
  }
}

TEST(LongtermUpdate, ZeroConsistencyLeavesConfidence) {
  // One segment over everything remaps to label 1; class 2 then has IoU 0.
  SemanticMap map;
  std::vector<GaussianPrimitive> prims;
  for (int v = 0; v < kCam.height; ++v) {
    for (int u = 0; u < kCam.width; ++u) {
      GaussianPrimitive p;
      p.position = back_project_pixel(u, v, 1.0, kCam, Pose());
      p.scale = 0.5f / 32.0f;
      p.label = u < 24 ? 1 : 2;
      p.confidence = 0.5f;
      prims.push_back(p);
    }
  }
  map.insert(prims);
  MemoryBuffer buffer;
  buffer.admit(flat_frame(Pose(), 1.0), kCam, 0.5, 0.1);
  longterm_update(map, buffer, kCam, LongtermConfig{});
  for (const auto& p : map.primitives()) {
    if (p.label == 2) EXPECT_EQ(p.confidence, 0.5f);
  }
}
