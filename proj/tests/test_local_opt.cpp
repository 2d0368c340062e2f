#include "semfuse/local_opt.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace semfuse;

namespace {

GaussianPrimitive prim(const Vec3& at, LabelId label, float conf) {
  GaussianPrimitive p;
  p.position = at;
  p.label = label;
  p.confidence = conf;
  return p;
}

// Segment of `n` new primitives one meter apart; the first `a` sit next to a
// label-1 scene primitive, the next `b` next to a label-2 one.
void voting_fixture(std::size_t n, std::size_t a, std::size_t b, SemanticMap& map,
                    std::vector<PrimitiveGroup>& groups) {
  std::vector<GaussianPrimitive> scene;
  PrimitiveGroup g;
  g.segment = 4;
  g.confidence = 0.9;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 at(static_cast<double>(i), 0, 0);
    g.primitives.push_back(prim(at, 4, 0.9f));
    if (i < a) scene.push_back(prim(at + Vec3(0.01, 0, 0), 1, 0.8f));
    else if (i < a + b) scene.push_back(prim(at + Vec3(0.01, 0, 0), 2, 0.8f));
  }
  map.labels().issue();
  map.labels().issue();
  map.insert(scene);
  groups.push_back(g);
}

}  // namespace

TEST(MajorityLabel, TiesGoToLowestLabel) {
  EXPECT_EQ(majority_label({2, 1, 2, 1}), 1u);
  EXPECT_EQ(majority_label({3, 3, 1}), 3u);
  EXPECT_EQ(majority_label({}), kUnlabeled);
}

TEST(Associate, UnanimousVotesHaveNoAmbiguity) {
  SemanticMap map;
  std::vector<PrimitiveGroup> groups;
  voting_fixture(10, 10, 0, map, groups);
  const auto report = associate(map, groups, LocalOptConfig{});
  const auto& s = report.segments.at(0);
  EXPECT_EQ(s.c1, 10u);
  EXPECT_EQ(s.c2, 0u);
  EXPECT_EQ(s.r, 0.0);
  EXPECT_EQ(s.kind, AssociationCase::merged);
}

TEST(Associate, SixThreeVoteCountsAndInvalidCase) {
  SemanticMap map;
  std::vector<PrimitiveGroup> groups;
  voting_fixture(10, 6, 3, map, groups);
  const auto report = associate(map, groups, LocalOptConfig{});
  const auto& s = report.segments.at(0);
  EXPECT_EQ(s.c1, 6u);
  EXPECT_EQ(s.c2, 3u);
  EXPECT_DOUBLE_EQ(s.r, 0.5);
  EXPECT_DOUBLE_EQ(s.p, 0.6);
  EXPECT_EQ(s.dominant, 1u);
  EXPECT_EQ(s.kind, AssociationCase::invalid);

  apply_labels(map, groups, report);
  for (std::size_t i = 9; i < map.size(); ++i) {
    EXPECT_EQ(map[static_cast<PrimitiveId>(i)].label, kUnlabeled);
    EXPECT_EQ(map[static_cast<PrimitiveId>(i)].confidence, 0.0f);
  }
}

TEST(Associate, LowAmbiguityHighCoherenceMerges) {
  SemanticMap map;
  std::vector<PrimitiveGroup> groups;
  voting_fixture(50, 30, 3, map, groups);
  const auto report = associate(map, groups, LocalOptConfig{});
  const auto& s = report.segments.at(0);
  EXPECT_DOUBLE_EQ(s.r, 0.1);
  EXPECT_DOUBLE_EQ(s.p, 0.6);
  EXPECT_EQ(s.kind, AssociationCase::merged);
  const std::size_t before = map.size();
  apply_labels(map, groups, report);
  for (std::size_t i = before; i < map.size(); ++i) {
    EXPECT_EQ(map[static_cast<PrimitiveId>(i)].label, 1u);
    EXPECT_FLOAT_EQ(map[static_cast<PrimitiveId>(i)].confidence, 0.9f);
  }
}

TEST(Associate, LowCoherenceIsNovel) {
  SemanticMap map;
  std::vector<PrimitiveGroup> groups;
  voting_fixture(50, 5, 0, map, groups);  // p = 0.1 < 0.15
  const auto report = associate(map, groups, LocalOptConfig{});
  EXPECT_EQ(report.segments.at(0).kind, AssociationCase::novel);
  apply_labels(map, groups, report);
  EXPECT_EQ(map[static_cast<PrimitiveId>(map.size() - 1)].label, 3u);
}

TEST(Associate, EmptyMapIssuesNovelLabel) {
  SemanticMap map;
  PrimitiveGroup g;
  g.segment = 1;
  g.primitives = {prim(Vec3::Zero(), 1, 0.6f), prim(Vec3(0.1, 0, 0), 1, 0.6f)};
  const auto report = associate(map, {g}, LocalOptConfig{});
  EXPECT_EQ(report.segments.at(0).kind, AssociationCase::novel);
  const auto applied = apply_labels(map, {g}, report);
  EXPECT_EQ(applied.at(0).label, 1u);
  EXPECT_EQ(map.labels().next(), 2u);
  EXPECT_EQ(map.size(), 2u);
}

// Brute-force vote counting against the indexed implementation.
TEST(Associate, MatchesBruteForceVoting) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const LocalOptConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    SemanticMap map;
    std::vector<GaussianPrimitive> scene(300);
    for (auto& p : scene) {
      p = prim(Vec3(unit(rng), unit(rng), 0.2 * unit(rng)), static_cast<LabelId>(rng() % 4), 0.7f);
    }
    map.insert(scene);
    std::vector<PrimitiveGroup> groups(6);
    for (std::size_t s = 0; s < groups.size(); ++s) {
      groups[s].segment = static_cast<SegmentId>(s + 1);
      const Vec3 c(unit(rng), unit(rng), 0.1);
      const std::size_t n = 5 + rng() % 40;
      for (std::size_t i = 0; i < n; ++i) {
        groups[s].primitives.push_back(
            prim(c + 0.15 * Vec3(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5), 1, 0.9f));
      }
    }
    const auto report = associate(map, groups, cfg);
    ASSERT_EQ(report.segments.size(), groups.size());
    for (std::size_t s = 0; s < groups.size(); ++s) {
      std::map<LabelId, std::size_t> votes;
      std::set<PrimitiveId> matched;
      for (const auto& q : groups[s].primitives) {
        std::vector<std::pair<double, PrimitiveId>> near;
        for (const auto& p : map.primitives()) {
          const double d2 = squared_distance(p.position, q.position);
          if (p.label != kUnlabeled && d2 <= cfg.search_radius * cfg.search_radius) near.push_back({d2, p.id});
        }
        std::sort(near.begin(), near.end());
        if (near.size() > cfg.k) near.resize(cfg.k);
        std::map<LabelId, std::size_t> local;
        for (const auto& [d2, id] : near) {
          ++local[map[id].label];
          matched.insert(id);
        }
        LabelId best = 0;
        std::size_t best_n = 0;
        for (const auto& [l, n] : local) {
          if (n > best_n) best = l, best_n = n;
        }
        if (best != 0) ++votes[best];
      }
      std::vector<std::pair<std::size_t, LabelId>> ranked;
      for (const auto& [l, n] : votes) ranked.push_back({n, l});
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      const auto& got = report.segments[s];
      const std::size_t c1 = ranked.empty() ? 0 : ranked[0].first;
      const std::size_t c2 = ranked.size() < 2 ? 0 : ranked[1].first;
      ASSERT_EQ(got.c1, c1);
      ASSERT_EQ(got.c2, c2);
      ASSERT_EQ(got.matched, std::vector<PrimitiveId>(matched.begin(), matched.end()));
      AssociationCase expected = AssociationCase::novel;
      if (c1 > 0) {
        ASSERT_EQ(got.dominant, ranked[0].second);
        const double r = static_cast<double>(c2) / static_cast<double>(c1);
        const double p = static_cast<double>(c1) / static_cast<double>(groups[s].primitives.size());
        if (r >= cfg.tau_valid) expected = AssociationCase::invalid;
        else if (p >= cfg.tau_p) expected = AssociationCase::merged;
      }
      ASSERT_EQ(got.kind, expected);
    }
  }
}

TEST(UpdateConfidence, HandValuesAndFixedPoint) {
  SemanticMap map;
  map.insert({prim(Vec3(0, 0, 0), 1, 0.5f), prim(Vec3(1, 0, 0), 2, 0.5f), prim(Vec3(2, 0, 0), 1, 1.0f)});
  AssociationReport report;
  SegmentAssociation s;
  s.segment = 3;
  s.kind = AssociationCase::merged;
  s.p = 0.5;
  s.dominant = 1;
  s.matched = {0, 1, 2};
  report.segments.push_back(s);
  update_confidence(map, report, {{3, 0.8}});
  EXPECT_NEAR(map[0].confidence, 0.7, 1e-6);
  EXPECT_NEAR(map[1].confidence, 0.3, 1e-6);
  EXPECT_EQ(map[2].confidence, 1.0f);
}

TEST(UpdateConfidence, OnlyMergedSegmentsUpdate) {
  SemanticMap map;
  map.insert({prim(Vec3(0, 0, 0), 1, 0.5f)});
  AssociationReport report;
  for (const auto kind : {AssociationCase::invalid, AssociationCase::novel}) {
    SegmentAssociation s;
    s.segment = static_cast<SegmentId>(report.segments.size() + 1);
    s.kind = kind;
    s.p = 1.0;
    s.dominant = 1;
    s.matched = {0};
    report.segments.push_back(s);
  }
  update_confidence(map, report, {{1, 1.0}, {2, 1.0}});
  EXPECT_EQ(map[0].confidence, 0.5f);
}
