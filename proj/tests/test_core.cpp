#include "semfuse/geometry.hpp"
#include "semfuse/kdtree.hpp"
#include "semfuse/semantic_map.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace semfuse;

namespace {

const CameraIntrinsics kCam{500.0, 320.0, 240.0, 640, 480};

}  // namespace

TEST(Geometry, PrincipalPointLiesOnOpticalAxis) {
  const Vec3 p = back_project_pixel(kCam.cx, kCam.cy, 2.0, kCam, Pose());
  EXPECT_EQ(p, Vec3(0.0, 0.0, 2.0));
}

TEST(Geometry, OneFocalLengthRightIsOneMeterAtUnitDepth) {
  const Vec3 p = back_project_pixel(kCam.cx + kCam.focal, kCam.cy, 1.0, kCam, Pose());
  EXPECT_NEAR(p.x(), 1.0, 1e-12);
  EXPECT_NEAR(p.y(), 0.0, 1e-12);
  EXPECT_NEAR(p.z(), 1.0, 1e-12);
}

TEST(Geometry, ZeroDepthImageGivesNoPoints) {
  const DepthImage depth(kCam.width, kCam.height, 0.0);
  EXPECT_TRUE(back_project(depth, kCam, Pose()).empty());
}

TEST(Geometry, BackProjectSkipsInvalidAndRecordsPixels) {
  DepthImage depth(kCam.width, kCam.height, 0.0);
  depth.at(10, 20) = 1.5;
  depth.at(5, 30) = 2.0;
  std::vector<std::size_t> pixels;
  const auto pts = back_project(depth, kCam, Pose(), &pixels);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pixels[0], depth.index(10, 20));
  EXPECT_EQ(pixels[1], depth.index(5, 30));
  EXPECT_NEAR(pts[1].x(), (5 - kCam.cx) * 2.0 / kCam.focal, 1e-12);
}

TEST(Geometry, BackProjectRejectsMismatchedDepth) {
  EXPECT_THROW(back_project(DepthImage(10, 10, 1.0), kCam, Pose()), InputError);
}

TEST(Geometry, ProjectOnAxisAndAfterTranslation) {
  const Projection a = project(Vec3(0, 0, 2), Pose(), kCam);
  EXPECT_TRUE(a.in_front);
  EXPECT_EQ(a.pixel, Vec2(kCam.cx, kCam.cy));
  EXPECT_EQ(a.depth, 2.0);
  const Pose back(Mat3::Identity(), Vec3(0, 0, -1));
  EXPECT_DOUBLE_EQ(project(Vec3(0, 0, 2), back, kCam).depth, 3.0);
  EXPECT_FALSE(project(Vec3(0, 0, -1), Pose(), kCam).in_front);
}

TEST(Geometry, ProjectInvertsBackProjection) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose pose = Pose::from_quaternion(Vec3(unit(rng), unit(rng), unit(rng)), unit(rng) - 0.5,
                                            unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) + 0.1);
    const int u = static_cast<int>(rng() % kCam.width);
    const int v = static_cast<int>(rng() % kCam.height);
    const double z = 0.2 + 5.0 * unit(rng);
    const Projection p = project(back_project_pixel(u, v, z, kCam, pose), pose, kCam);
    ASSERT_TRUE(p.in_front);
    ASSERT_LE((p.pixel - Vec2(u, v)).norm(), 0.5);
    ASSERT_NEAR(p.depth, z, 1e-9);
  }
}

TEST(Pose, RejectsNonRotations) {
  Mat3 scaled = 2.0 * Mat3::Identity();
  EXPECT_THROW(Pose(scaled, Vec3::Zero()), InputError);
  Mat3 mirror = Mat3::Identity();
  mirror(2, 2) = -1.0;
  EXPECT_THROW(Pose(mirror, Vec3::Zero()), InputError);
  EXPECT_THROW(Pose::from_quaternion(Vec3::Zero(), 0, 0, 0, 0), InputError);
}

TEST(Pose, LookAtPointsZTowardTarget) {
  const Pose p = look_at(Vec3(1, 2, 3), Vec3(1, 5, 3));
  EXPECT_NEAR((p.rotation().col(2) - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(p.to_camera(Vec3(1, 5, 3)).z(), 3.0, 1e-12);
}

TEST(Intrinsics, ValidateRejectsNonsense) {
  EXPECT_THROW((CameraIntrinsics{0.0, 1, 1, 10, 10}.validate()), InputError);
  EXPECT_THROW((CameraIntrinsics{1.0, 1, 1, 0, 10}.validate()), InputError);
  EXPECT_NO_THROW(kCam.validate());
}

TEST(SemanticMap, SingleCandidateWithinRadius) {
  SemanticMap map;
  GaussianPrimitive p;
  p.position = Vec3(0.05, 0, 0);
  p.label = 3;
  map.insert({p});
  const auto hits = map.knn_query(Vec3::Zero(), 5, 0.1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, 0u);
  EXPECT_TRUE(map.knn_query(Vec3(1, 0, 0), 5, 0.1).empty());
}

TEST(SemanticMap, EmptyMapAnswersNothing) {
  const SemanticMap map;
  EXPECT_TRUE(map.knn_query(Vec3::Zero(), 5, 1.0).empty());
  EXPECT_TRUE(map.knn_query_labeled(Vec3::Zero(), 5, 1.0).empty());
}

TEST(SemanticMap, KnnMatchesBruteForceScan) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SemanticMap map;
  std::vector<GaussianPrimitive> batch(100);
  for (auto& p : batch) {
    // Snap to a coarse grid so distance ties are common.
    p.position = Vec3(std::round(unit(rng) * 10) / 10, std::round(unit(rng) * 10) / 10,
                      std::round(unit(rng) * 10) / 10);
    p.label = static_cast<LabelId>(rng() % 3);
  }
  map.insert(batch);
  for (int q = 0; q < 200; ++q) {
    const Vec3 query(unit(rng), unit(rng), unit(rng));
    const double radius = 0.05 + 0.5 * unit(rng);
    for (const bool labeled : {false, true}) {
      std::vector<Neighbor> brute;
      for (const auto& p : map.primitives()) {
        if (labeled && p.label == kUnlabeled) continue;
        const double d2 = squared_distance(p.position, query);
        if (d2 <= radius * radius) brute.push_back({p.id, d2});
      }
      std::sort(brute.begin(), brute.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.squared_distance != b.squared_distance ? a.squared_distance < b.squared_distance
                                                        : a.id < b.id;
      });
      if (brute.size() > 5) brute.resize(5);
      const auto got = labeled ? map.knn_query_labeled(query, 5, radius) : map.knn_query(query, 5, radius);
      ASSERT_EQ(got, brute);
    }
  }
}

TEST(KdTree, RadiusSearchAndStrictProbeMatchBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> pts(500);
  for (auto& p : pts) p = Vec3(unit(rng), unit(rng), unit(rng));
  const KdTree tree(pts);
  for (int q = 0; q < 100; ++q) {
    const Vec3 query(unit(rng), unit(rng), unit(rng));
    const double r = 0.2 * unit(rng);
    std::size_t inside = 0;
    bool strict = false;
    for (const auto& p : pts) {
      const double d2 = squared_distance(p, query);
      if (d2 <= r * r) ++inside;
      if (d2 < r * r) strict = true;
    }
    EXPECT_EQ(tree.radius_search(query, r).size(), inside);
    EXPECT_EQ(tree.any_within_strict(query, r), strict);
  }
  // Exact boundary: a point at distance exactly r is inside but not strictly.
  const KdTree one(std::vector<Vec3>{Vec3(0.5, 0, 0)});
  EXPECT_EQ(one.radius_search(Vec3::Zero(), 0.5).size(), 1u);
  EXPECT_FALSE(one.any_within_strict(Vec3::Zero(), 0.5));
}

TEST(LabelRegistry, IssuesFreshIdsAndNeverRewinds) {
  LabelRegistry r;
  EXPECT_EQ(r.issue(), 1u);
  EXPECT_EQ(r.issue(), 2u);
  r.restore(1);
  EXPECT_EQ(r.issue(), 3u);
  r.restore(10);
  EXPECT_EQ(r.issue(), 10u);
}
