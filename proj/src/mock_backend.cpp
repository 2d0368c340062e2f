#include "semfuse/backend.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace semfuse {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double overlap(double a0, double a1, double b0, double b1) {
  return std::min(a1, b1) - std::max(a0, b0);
}

// City-block distance from each mask pixel to the nearest pixel outside the
// mask (the image border counts as outside).
std::vector<std::size_t> inner_distance(const MaskImage& mask) {
  const int w = mask.width();
  const int h = mask.height();
  const std::size_t far = static_cast<std::size_t>(w + h);
  std::vector<std::size_t> d(mask.size(), 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = mask.index(u, v);
      if (!mask[i]) continue;
      const std::size_t up = v > 0 ? d[i - static_cast<std::size_t>(w)] : 0;
      const std::size_t left = u > 0 ? d[i - 1] : 0;
      d[i] = std::min({up, left, far}) + 1;
    }
  }
  for (int v = h - 1; v >= 0; --v) {
    for (int u = w - 1; u >= 0; --u) {
      const std::size_t i = mask.index(u, v);
      if (!mask[i]) continue;
      const std::size_t down = v + 1 < h ? d[i + static_cast<std::size_t>(w)] : 0;
      const std::size_t right = u + 1 < w ? d[i + 1] : 0;
      d[i] = std::min({d[i], down + 1, right + 1});
    }
  }
  return d;
}

}  // namespace

MockBackend::MockBackend(std::vector<NamedColor> palette) : palette_(std::move(palette)) {}

const NamedColor* MockBackend::lookup(const Rgb8& color) const {
  for (const auto& entry : palette_) {
    if (entry.color == color) return &entry;
  }
  return nullptr;
}

const NamedColor* MockBackend::lookup(const std::string& name) const {
  for (const auto& entry : palette_) {
    if (entry.name == name) return &entry;
  }
  return nullptr;
}

std::string MockBackend::caption(const EntityViews& views, const std::string&) {
  // Pixels deep inside the mask outweigh those along its rim, where
  // neighbouring surfaces bleed in. The context crop tells how much of each
  // surface the mask encloses: the entity is enclosed, its surroundings are not.
  std::map<std::string, double> votes;
  for (const ViewImage* v : views.masked) {
    const auto depth = inner_distance(v->mask);
    for (std::size_t i = 0; i < v->image.size(); ++i) {
      if (!v->mask[i]) continue;
      if (const NamedColor* c = lookup(v->image[i])) votes[c->name] += static_cast<double>(depth[i]);
    }
  }
  if (views.crop != nullptr) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> enclosed;  // inside, total
    const ViewImage& crop = *views.crop;
    for (std::size_t i = 0; i < crop.image.size(); ++i) {
      const NamedColor* c = lookup(crop.image[i]);
      if (c == nullptr) continue;
      auto& e = enclosed[c->name];
      ++e.second;
      if (crop.mask[i]) ++e.first;
    }
    for (auto& [name, vote] : votes) {
      const auto it = enclosed.find(name);
      const double share = it == enclosed.end() || it->second.second == 0
                               ? 0.0
                               : static_cast<double>(it->second.first) /
                                     static_cast<double>(it->second.second);
      vote *= share;
    }
  }
  std::string best = "unknown";
  double best_vote = 0.0;
  for (const auto& [name, vote] : votes) {
    if (vote > best_vote) {
      best = name;
      best_vote = vote;
    }
  }
  return best;
}

std::vector<std::string> MockBackend::tag(const std::vector<std::string>& captions,
                                          const std::string&) {
  std::vector<std::string> tags;
  tags.reserve(captions.size());
  for (const auto& c : captions) tags.push_back(lower(c));
  return tags;
}

std::string MockBackend::relation_rule(const PairDescriptor& pair) {
  constexpr double kFootprintMargin = 0.01;
  constexpr double kContactTolerance = 0.03;
  const Bounds& s = pair.src_bounds;
  const Bounds& d = pair.dst_bounds;
  const bool stacked = overlap(s.min.x(), s.max.x(), d.min.x(), d.max.x()) > kFootprintMargin &&
                       overlap(s.min.y(), s.max.y(), d.min.y(), d.max.y()) > kFootprintMargin;
  if (stacked && s.min.z() >= d.max.z() - kContactTolerance) return "on";
  if (stacked && d.min.z() >= s.max.z() - kContactTolerance) return "under";
  return "next to";
}

std::vector<std::string> MockBackend::relations(const std::vector<PairDescriptor>& pairs,
                                                const std::string&) {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(relation_rule(p));
  return out;
}

double MockBackend::score(const ViewImage& crop, const std::string& caption) {
  const NamedColor* entity = lookup(caption);
  if (entity == nullptr) return 0.0;
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < crop.image.size(); ++i) {
    const bool masked = crop.mask[i] != 0;
    const bool truth = crop.image[i] == entity->color;
    if (masked && truth) ++inter;
    if (masked || truth) ++uni;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::string> MockBackend::match_classes(const std::vector<std::string>& tags,
                                                    const std::vector<std::string>& classes) {
  std::vector<std::string> out;
  for (const auto& t : tags) {
    std::string match;
    for (const auto& c : classes) {
      if (lower(c) == lower(t)) {
        match = c;
        break;
      }
    }
    out.push_back(match);
  }
  return out;
}

}  // namespace semfuse
