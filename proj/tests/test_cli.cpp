#include "support.hpp"

#include "semfuse/frame_io.hpp"
#include "semfuse/metrics.hpp"
#include "semfuse/png_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <numbers>
#include <optional>

using namespace semfuse;
namespace fs = std::filesystem;

namespace {

std::vector<nlohmann::json> read_events(const fs::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::vector<int> keyframes_of(const std::vector<nlohmann::json>& events, const std::string& kind) {
  std::vector<int> out;
  for (const auto& e : events) {
    if (e["event"] == kind) out.push_back(e["keyframe"].get<int>());
  }
  return out;
}

}  // namespace

TEST(Cli, EmptyDirectoryIsAnInputError) {
  const auto dir = support::scratch("cli_empty");
  const auto log = dir / "log.txt";
  EXPECT_NE(support::run_cli("run --frames \"" + (dir / "frames").string() + "\" --out x", log), 0)
      << "missing directory is a usage error";
  fs::create_directories(dir / "frames");
  EXPECT_EQ(support::run_cli("run --frames \"" + (dir / "frames").string() + "\" --out \"" +
                                 (dir / "out").string() + "\"",
                             log),
            2);
  EXPECT_NE(support::read_file(log).find("no frames"), std::string::npos);
}

TEST(Cli, MalformedFrameNamesTheFrame) {
  const auto dir = support::scratch("cli_bad_frame");
  support::simulate("cup_on_table", "clean", 1, dir / "frames");
  std::ofstream(dir / "frames" / "depth" / frame_name(2, ".png")) << "garbage";
  const auto log = dir / "log.txt";
  EXPECT_EQ(support::run_cli("run --frames \"" + (dir / "frames").string() + "\" --out \"" +
                                 (dir / "out").string() + "\"",
                             log),
            2);
  EXPECT_NE(support::read_file(log).find("frame 2"), std::string::npos);
}

TEST(Cli, UnknownPoseFormatIsAnInputError) {
  const auto dir = support::scratch("cli_pose");
  support::simulate("cup_on_table", "clean", 1, dir / "frames");
  const auto log = dir / "log.txt";
  ASSERT_EQ(support::run_cli("run --no-graph --frames \"" + (dir / "frames").string() + "\" --out \"" +
                                 (dir / "snap").string() + "\"",
                             log),
            0);
  EXPECT_EQ(support::run_cli("render --snapshot \"" + (dir / "snap").string() +
                                 "\" --pose \"1 2 three\" --out \"" + (dir / "r").string() + "\"",
                             log),
            2);
}

TEST(Cli, RunsAreByteIdentical) {
  const auto dir = support::scratch("cli_determinism");
  support::simulate("cup_on_table", "swap30_dilate2", 3, dir / "frames");
  const auto log = dir / "log.txt";
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(support::run_cli("run --frames \"" + (dir / "frames").string() + "\" --out \"" +
                                   (dir / out).string() + "\"",
                               log),
              0);
    ASSERT_EQ(support::run_cli("eval --snapshot \"" + (dir / out).string() + "\" --gt \"" +
                                   (dir / "frames").string() + "\" --out \"" +
                                   (dir / out / "report.json").string() + "\"",
                               log),
              0);
  }
  for (const char* f : {"map.ply", "graph.json", "buffer.json", "snapshot.json", "events.jsonl", "report.json"}) {
    EXPECT_EQ(support::read_file(dir / "a" / f), support::read_file(dir / "b" / f)) << f;
  }
}

TEST(Cli, GraphJsonOfTwoEntityScene) {
  const auto dir = support::scratch("cli_graph");
  support::simulate("cup_on_table", "clean", 5, dir / "frames");
  const auto log = dir / "log.txt";
  ASSERT_EQ(support::run_cli("run --frames \"" + (dir / "frames").string() + "\" --out \"" +
                                 (dir / "snap").string() + "\"",
                             log),
            0);
  ASSERT_EQ(support::run_cli("export graph-json --snapshot \"" + (dir / "snap").string() + "\" --out \"" +
                                 (dir / "graph.json").string() + "\"",
                             log),
            0);
  const std::string text = support::read_file(dir / "graph.json");
  EXPECT_EQ(support::graph_schema_errors(text), "");
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["nodes"].size(), 2u);
  EXPECT_EQ(j["edges"].size(), 1u);

  ASSERT_EQ(support::run_cli("export map-ply --snapshot \"" + (dir / "snap").string() + "\" --out \"" +
                                 (dir / "m.ply").string() + "\"",
                             log),
            0);
  EXPECT_EQ(support::read_file(dir / "m.ply"), support::read_file(dir / "snap" / "map.ply"));
}

// Forty keyframes: refinement and long-term every 6, graph at 12 and every 12
// after, plus the closing update at the last keyframe.
TEST(Cli, ScheduleFromEventLog) {
  const auto dir = support::scratch("cli_schedule");
  support::simulate("room8", "clean", 7, dir / "frames");
  const auto log = dir / "log.txt";
  ASSERT_EQ(support::run_cli("run --frames \"" + (dir / "frames").string() + "\" --out \"" +
                                 (dir / "snap").string() + "\"",
                             log),
            0);
  const auto events = read_events(dir / "snap" / "events.jsonl");
  const std::vector<int> ticks{6, 12, 18, 24, 30, 36};
  EXPECT_EQ(keyframes_of(events, "refine"), ticks);
  EXPECT_EQ(keyframes_of(events, "longterm"), ticks);
  EXPECT_EQ(keyframes_of(events, "graph_init"), std::vector<int>{12});
  EXPECT_EQ(keyframes_of(events, "graph_update"), (std::vector<int>{24, 36, 40}));
  EXPECT_EQ(keyframes_of(events, "admission").size(), 40u);
  // Within a tick refinement precedes the long-term update, which precedes admission.
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i]["event"] == "refine") {
      EXPECT_EQ(events[i + 1]["event"], "longterm");
      EXPECT_EQ(events[i + 2]["event"], "admission");
    }
  }
  const auto timings = read_json(dir / "snap" / "timings.json");
  for (const char* stage : {"ingest", "associate", "global_refine", "longterm", "admission", "scene_graph"}) {
    EXPECT_TRUE(timings["stages"].contains(stage)) << stage;
  }
}

// Motion-triggered refinement ticks where the accumulated camera path since
// the previous tick first reaches a threshold, replayed from the poses.
TEST(Cli, MotionTriggeredRefinement) {
  const auto dir = support::scratch("cli_motion");
  support::simulate("room8", "clean", 7, dir / "frames");
  const auto log = dir / "log.txt";
  EXPECT_EQ(support::run_cli("run --no-graph --set refine_trigger=motion --frames \"" + (dir / "frames").string() +
                                 "\" --out \"" + (dir / "bad").string() + "\"",
                             log),
            2);
  ASSERT_EQ(support::run_cli("run --no-graph --set refine_trigger=motion --set refine_motion_translation=0.5 "
                             "--set refine_motion_rotation_deg=30 --frames \"" +
                                 (dir / "frames").string() + "\" --out \"" + (dir / "snap").string() + "\"",
                             log),
            0);
  const auto events = read_events(dir / "snap" / "events.jsonl");
  const FrameSequence seq = FrameSequence::open(dir / "frames");
  std::vector<int> expected;
  std::optional<Pose> last;
  double moved = 0.0, turned = 0.0;
  for (const auto& e : events) {
    if (e["event"] != "ingest") continue;
    const Pose& p = seq.frames()[e["frame"].get<std::size_t>()].pose;
    if (last) {
      moved += p.distance_to(*last);
      turned += p.angle_to(*last) * 180.0 / std::numbers::pi;
    }
    last = p;
    if (moved >= 0.5 || turned >= 30.0) {
      expected.push_back(e["keyframe"].get<int>());
      moved = turned = 0.0;
    }
  }
  ASSERT_FALSE(expected.empty());
  EXPECT_EQ(keyframes_of(events, "refine"), expected);
  EXPECT_EQ(keyframes_of(events, "longterm"), expected);
  EXPECT_NE(expected, (std::vector<int>{6, 12, 18, 24, 30, 36}));
}

// Noiseless run over twenty views of the eight-entity room, shared by the
// end-to-end accuracy checks below.
class NoiselessRoom : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = support::scratch("cli_noiseless");
    auto spec = nlohmann::json::parse(support::read_file(support::scene_spec("room8")));
    spec["trajectory"]["frames"] = 20;
    std::ofstream(dir_ / "room8_20.json") << spec.dump();
    const auto log = dir_ / "log.txt";
    ASSERT_EQ(support::run_cli("simulate --spec \"" + (dir_ / "room8_20.json").string() + "\" --noise \"" +
                                   support::noise_spec("clean").string() + "\" --seed 7 --out \"" +
                                   (dir_ / "frames").string() + "\"",
                               log),
              0);
    ASSERT_EQ(support::run_cli("run --frames \"" + (dir_ / "frames").string() + "\" --out \"" +
                                   (dir_ / "snap").string() + "\"",
                               log),
              0);
    ASSERT_EQ(support::run_cli("eval --snapshot \"" + (dir_ / "snap").string() + "\" --gt \"" +
                                   (dir_ / "frames").string() + "\" --mode exact --out \"" +
                                   (dir_ / "report.json").string() + "\"",
                               log),
              0);
  }

  static nlohmann::json report() { return read_json(dir_ / "report.json"); }

  static Assignment assignment() {
    Assignment a;
    const auto r = report();
    for (const auto& [k, v] : r["assignment"].items()) a[std::stoul(k)] = v.get<ClassId>();
    return a;
  }

  static inline fs::path dir_;
};

TEST_F(NoiselessRoom, ExactModeMiouAtLeast099) {
  const auto r = report();
  EXPECT_EQ(r["uncovered"].get<int>(), 0);
  EXPECT_DOUBLE_EQ(r["relation_recall"].get<double>(), 1.0);
  EXPECT_GE(r["miou"].get<double>(), 0.99);
}

TEST_F(NoiselessRoom, PrimitiveLabelsMatchGroundTruth) {
  const MapSnapshot snap = load_snapshot(dir_ / "snap");
  const SyntheticScene scene = SyntheticScene::from_json(read_json(dir_ / "frames" / "scene.json"));
  EXPECT_GE(primitive_accuracy(snap.map, scene, assignment()), 0.99);
}

TEST_F(NoiselessRoom, RenderAtTrainingPoseMatchesGroundTruth) {
  const FrameSequence seq = FrameSequence::open(dir_ / "frames");
  const Assignment a = assignment();
  const auto log = dir_ / "log.txt";
  std::size_t covered = 0;
  std::size_t agree = 0;
  for (const int index : {0, 7, 13}) {
    const fs::path out = dir_ / ("render_" + std::to_string(index));
    ASSERT_EQ(support::run_cli("render --snapshot \"" + (dir_ / "snap").string() + "\" --pose \"" +
                                   format_pose(seq.frames()[static_cast<std::size_t>(index)].pose) +
                                   "\" --out \"" + out.string() + "\"",
                               log),
              0);
    const Gray16Image labels = read_gray16_png(out / "labels.png");
    const Gray16Image gt = read_gray16_png(dir_ / "frames" / "gt" / frame_name(index, ".png"));
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == 0 || labels[i] == 0) continue;
      ++covered;
      const auto it = a.find(labels[i]);
      agree += it != a.end() && it->second == gt[i];
    }
  }
  ASSERT_GT(covered, 0u);
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(covered), 0.99);
}
