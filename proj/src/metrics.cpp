#include "semfuse/metrics.hpp"

#include "semfuse/geometry.hpp"
#include "semfuse/png_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace semfuse {

namespace fs = std::filesystem;

namespace {

std::string normalize(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const auto first = s.find_first_not_of(" \t\r\n\".");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\".");
  s = s.substr(first, last - first + 1);
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '_' || c == '-') {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

MatchMode parse_match_mode(const std::string& text) {
  if (text == "exact") return MatchMode::exact;
  if (text == "oracle") return MatchMode::oracle;
  if (text == "llm") return MatchMode::llm;
  throw InputError("unknown match mode \"" + text + "\"");
}

std::string_view to_string(MatchMode mode) {
  switch (mode) {
    case MatchMode::exact:
      return "exact";
    case MatchMode::oracle:
      return "oracle";
    case MatchMode::llm:
      return "llm";
  }
  return "exact";
}

Assignment match_exact(const std::map<LabelId, std::string>& tags,
                       const std::map<ClassId, std::string>& classes) {
  std::map<std::string, ClassId> by_name;
  for (const auto& [id, name] : classes) by_name.emplace(normalize(name), id);
  Assignment out;
  for (const auto& [label, tag] : tags) {
    const auto it = by_name.find(normalize(tag));
    out[label] = it == by_name.end() ? kReject : it->second;
  }
  return out;
}

Assignment match_oracle(const OverlapCounts& overlaps) {
  Assignment out;
  std::map<LabelId, std::size_t> best;
  for (const auto& [key, count] : overlaps) {
    const auto [label, cls] = key;
    if (cls == kReject || count == 0) continue;
    // Keys iterate by ascending class within a label, so strict > keeps the
    // lower class on ties.
    if (!best.count(label) || count > best[label]) {
      best[label] = count;
      out[label] = cls;
    }
  }
  for (const auto& [key, count] : overlaps) out.emplace(key.first, kReject);
  return out;
}

Assignment match_llm(const std::map<LabelId, std::string>& tags,
                     const std::map<ClassId, std::string>& classes, InferenceBackend& backend) {
  std::vector<std::string> tag_list;
  std::vector<LabelId> labels;
  for (const auto& [label, tag] : tags) {
    labels.push_back(label);
    tag_list.push_back(tag);
  }
  std::vector<std::string> class_names;
  for (const auto& [id, name] : classes) class_names.push_back(name);
  const auto answers = backend.match_classes(tag_list, class_names);
  if (answers.size() != labels.size()) throw BackendError("class matching returned wrong count");
  std::map<LabelId, std::string> answered;
  for (std::size_t i = 0; i < labels.size(); ++i) answered[labels[i]] = answers[i];
  Assignment out = match_exact(answered, classes);
  return out;
}

ConfusionAccumulator::ConfusionAccumulator(std::vector<ClassId> classes)
    : classes_(std::move(classes)) {
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  if (!classes_.empty() && classes_.front() == kReject) classes_.erase(classes_.begin());
  const std::size_t n = classes_.size() + 1;
  counts_.assign(n * n, 0);
}

std::size_t ConfusionAccumulator::slot(ClassId c) const {
  if (c == kReject) return 0;
  const auto it = std::lower_bound(classes_.begin(), classes_.end(), c);
  if (it == classes_.end() || *it != c) throw InputError("confusion: unknown class");
  return static_cast<std::size_t>(it - classes_.begin()) + 1;
}

void ConfusionAccumulator::add(ClassId gt, ClassId pred, std::size_t count) {
  if (gt == kReject) throw InputError("confusion: gt must be a class");
  counts_[slot(gt) * (classes_.size() + 1) + slot(pred)] += count;
  total_ += count;
}

std::size_t ConfusionAccumulator::at(ClassId gt, ClassId pred) const {
  return counts_[slot(gt) * (classes_.size() + 1) + slot(pred)];
}

SegmentationScores segmentation_metrics(const ConfusionAccumulator& confusion) {
  if (confusion.total() == 0) throw InputError("metrics: empty ground truth");
  const auto& classes = confusion.classes();
  SegmentationScores s;
  double weight_sum = 0.0;
  for (const ClassId c : classes) {
    std::size_t row = 0;
    std::size_t col = 0;
    for (const ClassId o : classes) col += confusion.at(o, c);
    row += confusion.at(c, kReject);
    for (const ClassId o : classes) row += confusion.at(c, o);
    if (row == 0) continue;
    const std::size_t tp = confusion.at(c, c);
    const std::size_t fn = row - tp;
    const std::size_t fp = col - tp;
    ClassScore score;
    score.id = c;
    score.support = row;
    score.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    score.recall = static_cast<double>(tp) / static_cast<double>(row);
    s.classes.push_back(score);
    s.miou += score.iou;
    s.macc += score.recall;
    s.fmiou += score.iou * static_cast<double>(row);
    weight_sum += static_cast<double>(row);
  }
  const double n = static_cast<double>(s.classes.size());
  s.miou /= n;
  s.macc /= n;
  s.fmiou /= weight_sum;
  return s;
}

SegmentationScores segmentation_metrics(const LabelImage& predicted, const IdImage& gt,
                                        const Assignment& assignment) {
  if (!predicted.same_shape(gt)) throw InputError("metrics: image sizes differ");
  std::set<ClassId> classes;
  for (const auto g : gt.pixels()) {
    if (g != 0) classes.insert(g);
  }
  for (const auto& [label, cls] : assignment) {
    if (cls != kReject) classes.insert(cls);
  }
  ConfusionAccumulator acc({classes.begin(), classes.end()});
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    const auto it = assignment.find(predicted[i]);
    acc.add(gt[i], it == assignment.end() ? kReject : it->second);
  }
  return segmentation_metrics(acc);
}

CanonicalRelation canonical_relation(const std::string& text) {
  static const std::map<std::string, CanonicalRelation> table = {
      {"on", {"on", false, false}},
      {"on top of", {"on", false, false}},
      {"atop", {"on", false, false}},
      {"resting on", {"on", false, false}},
      {"sitting on", {"on", false, false}},
      {"lying on", {"on", false, false}},
      {"placed on", {"on", false, false}},
      {"standing on", {"on", false, false}},
      {"supported by", {"on", false, false}},
      {"under", {"on", true, false}},
      {"below", {"on", true, false}},
      {"beneath", {"on", true, false}},
      {"underneath", {"on", true, false}},
      {"supports", {"on", true, false}},
      {"next to", {"next to", false, true}},
      {"beside", {"next to", false, true}},
      {"adjacent to", {"next to", false, true}},
      {"near", {"next to", false, true}},
      {"close to", {"next to", false, true}},
      {"by", {"next to", false, true}},
      {"alongside", {"next to", false, true}},
      {"touching", {"next to", false, true}},
      {"inside", {"inside", false, false}},
      {"in", {"inside", false, false}},
      {"within", {"inside", false, false}},
      {"contains", {"inside", true, false}},
      {"above", {"above", false, false}},
      {"attached to", {"attached to", false, false}},
      {"hanging on", {"hanging on", false, false}},
      {"leaning against", {"leaning against", false, false}},
  };
  const std::string key = normalize(text);
  const auto it = table.find(key);
  if (it != table.end()) return it->second;
  return {key, false, false};
}

namespace {

std::tuple<std::string, std::string, std::string> canonical_triplet(const Relation& r) {
  const CanonicalRelation c = canonical_relation(r.relation);
  std::string s = normalize(r.subject);
  std::string o = normalize(r.object);
  if (c.reversed) std::swap(s, o);
  if (c.symmetric && o < s) std::swap(s, o);
  return {s, c.relation, o};
}

}  // namespace

double relation_recall(const std::vector<Relation>& predicted, const std::vector<Relation>& gt) {
  if (gt.empty()) return 0.0;
  std::set<std::tuple<std::string, std::string, std::string>> pred;
  for (const auto& r : predicted) pred.insert(canonical_triplet(r));
  std::set<std::tuple<std::string, std::string, std::string>> truth;
  for (const auto& r : gt) truth.insert(canonical_triplet(r));
  std::size_t hit = 0;
  for (const auto& t : truth) hit += pred.count(t);
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::vector<Relation> graph_relations(const SceneGraph& graph, const Assignment& assignment,
                                      const std::map<ClassId, std::string>& classes) {
  const auto name_of = [&](LabelId label) -> std::string {
    const auto it = assignment.find(label);
    if (it == assignment.end() || it->second == kReject) return {};
    const auto c = classes.find(it->second);
    return c == classes.end() ? std::string{} : c->second;
  };
  std::vector<Relation> out;
  for (const auto& [key, edge] : graph.edges) {
    if (edge.relation.empty()) continue;
    const std::string s = name_of(edge.src);
    const std::string o = name_of(edge.dst);
    if (s.empty() || o.empty()) continue;
    out.push_back({s, edge.relation, o});
  }
  return out;
}

std::vector<GtPoint> gt_points(const fs::path& frames, int stride, double voxel) {
  if (stride < 1 || !(voxel > 0.0)) throw InputError("gt points: bad stride or voxel");
  const FrameSequence seq = FrameSequence::open(frames);
  const CameraIntrinsics& k = seq.intrinsics();
  std::vector<GtPoint> out;
  std::unordered_set<std::uint64_t> seen;
  const auto cell = [&](const Vec3& p) {
    const auto q = [&](double x) {
      return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(x / voxel)) + (1 << 20)) &
             0x1fffff;
    };
    return (q(p.x()) << 42) | (q(p.y()) << 21) | q(p.z());
  };
  for (const auto& entry : seq.frames()) {
    const DepthImage depth = read_depth_mm(frames / "depth" / frame_name(entry.index, ".png"));
    const Gray16Image gt = read_gray16_png(frames / "gt" / frame_name(entry.index, ".png"));
    if (!depth.same_shape(gt)) throw InputError("gt points: mask and depth sizes differ");
    for (int v = 0; v < depth.height(); v += stride) {
      for (int u = 0; u < depth.width(); u += stride) {
        const double z = depth.at(u, v);
        const ClassId c = gt.at(u, v);
        if (!(z > 0.0) || c == kReject) continue;
        const Vec3 p = back_project_pixel(u, v, z, k, entry.pose);
        if (seen.insert(cell(p)).second) out.push_back({p, c});
      }
    }
  }
  return out;
}

std::vector<LabelId> transfer_labels(const SemanticMap& map, const std::vector<GtPoint>& points,
                                     double radius) {
  std::vector<LabelId> out(points.size(), kUnlabeled);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nb = map.knn_query_labeled(points[i].position, 1, radius);
    if (!nb.empty()) out[i] = map[nb.front().id].label;
  }
  return out;
}

EvalReport evaluate(const EvalInputs& in, MatchMode mode) {
  if (in.map == nullptr || in.scene == nullptr) throw InputError("evaluate: missing map or scene");
  EvalReport report;
  report.mode = mode;
  for (const auto& e : in.scene->entities) report.class_names[e.id] = e.name;

  const auto points = gt_points(in.frames, in.stride, in.voxel);
  if (points.empty()) throw InputError("evaluate: empty ground truth");
  const auto predicted = transfer_labels(*in.map, points, in.search_radius);

  std::set<LabelId> labels;
  for (const auto& p : in.map->primitives()) {
    if (p.label != kUnlabeled) labels.insert(p.label);
  }
  report.predicted_labels = labels.size();

  std::map<LabelId, std::string> tags;
  if (in.graph != nullptr) {
    for (const auto& [id, node] : in.graph->nodes) tags[id] = node.tag;
  }
  switch (mode) {
    case MatchMode::exact:
      report.assignment = match_exact(tags, report.class_names);
      break;
    case MatchMode::oracle: {
      OverlapCounts overlaps;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (predicted[i] != kUnlabeled) ++overlaps[{predicted[i], points[i].cls}];
      }
      report.assignment = match_oracle(overlaps);
      break;
    }
    case MatchMode::llm:
      if (in.backend == nullptr) throw InputError("evaluate: llm mode needs a backend");
      report.assignment = match_llm(tags, report.class_names, *in.backend);
      break;
  }

  std::vector<ClassId> classes;
  for (const auto& [id, name] : report.class_names) classes.push_back(id);
  ConfusionAccumulator acc(classes);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ClassId pred = kReject;
    if (predicted[i] == kUnlabeled) {
      ++report.uncovered;
    } else {
      const auto it = report.assignment.find(predicted[i]);
      if (it != report.assignment.end()) pred = it->second;
    }
    acc.add(points[i].cls, pred);
  }
  report.points = points.size();
  report.scores = segmentation_metrics(acc);
  if (in.graph != nullptr) {
    report.relation_recall = relation_recall(
        graph_relations(*in.graph, report.assignment, report.class_names), in.scene->relations);
  }
  return report;
}

double primitive_accuracy(const SemanticMap& map, const SyntheticScene& scene,
                          const Assignment& assignment, double tolerance) {
  std::size_t counted = 0;
  std::size_t correct = 0;
  for (const auto& p : map.primitives()) {
    const std::uint32_t truth = scene.entity_at(p.position, tolerance);
    if (truth == 0) continue;
    ++counted;
    const auto it = assignment.find(p.label);
    if (it != assignment.end() && it->second == truth) ++correct;
  }
  return counted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(counted);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : scores.classes) {
    const auto it = class_names.find(c.id);
    classes.push_back({{"id", c.id},
                       {"name", it == class_names.end() ? std::string{} : it->second},
                       {"iou", c.iou},
                       {"recall", c.recall},
                       {"support", c.support}});
  }
  nlohmann::json assign = nlohmann::json::object();
  for (const auto& [label, cls] : assignment) assign[std::to_string(label)] = cls;
  return {{"mode", std::string(to_string(mode))},
          {"miou", scores.miou},
          {"fmiou", scores.fmiou},
          {"macc", scores.macc},
          {"relation_recall", relation_recall},
          {"points", points},
          {"uncovered", uncovered},
          {"predicted_labels", predicted_labels},
          {"classes", classes},
          {"assignment", assign}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "class,name,iou,recall,support\n";
  for (const auto& c : scores.classes) {
    const auto it = class_names.find(c.id);
    out << c.id << ',' << (it == class_names.end() ? "" : it->second) << ',' << c.iou << ','
        << c.recall << ',' << c.support << '\n';
  }
  out << "mean,,"
      << scores.miou << ',' << scores.macc << ',' << points << '\n';
  return out.str();
}

}  // namespace semfuse
