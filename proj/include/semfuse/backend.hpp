#pragma once

#include "semfuse/prompts.hpp"
#include "semfuse/types.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace semfuse {

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using MaskImage = Image<std::uint8_t>;

// One image handed to the vision model: a crop (with context) or a masked
// view (pixels outside the entity blacked out). `mask` marks entity pixels
// inside `image`.
struct ViewImage {
  int keyframe = 0;
  std::size_t area = 0;  // entity pixels in the full frame
  RgbImage image;
  MaskImage mask;
};

struct EntityViews {
  LabelId entity = kUnlabeled;
  const ViewImage* crop = nullptr;
  std::vector<const ViewImage*> masked;  // descending area
};

struct Bounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct PairDescriptor {
  LabelId src = kUnlabeled;
  LabelId dst = kUnlabeled;
  std::string src_tag;
  std::string dst_tag;
  Vec3 src_center = Vec3::Zero();
  Vec3 dst_center = Vec3::Zero();
  Vec3 vector = Vec3::Zero();  // dst_center - src_center
  Bounds src_bounds;
  Bounds dst_bounds;
};

// Vision/language calls used by the scene graph and the evaluator. Every
// method may throw BackendError.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;

  virtual std::string caption(const EntityViews& views, const std::string& prompt) = 0;
  // One call for all captions; returns one tag per caption.
  virtual std::vector<std::string> tag(const std::vector<std::string>& captions,
                                       const std::string& prompt) = 0;
  // One call for all pairs; returns one relation per pair, read as
  // "src <relation> dst".
  virtual std::vector<std::string> relations(const std::vector<PairDescriptor>& pairs,
                                             const std::string& prompt) = 0;
  // Agreement between an image and a caption, in [0, 1].
  virtual double score(const ViewImage& crop, const std::string& caption) = 0;
  // Maps each predicted tag to one of `classes` or to "" (reject).
  virtual std::vector<std::string> match_classes(const std::vector<std::string>& tags,
                                                 const std::vector<std::string>& classes) = 0;
};

struct NamedColor {
  std::string name;
  Rgb8 color;
};

// Deterministic offline backend. Knows the flat color of every entity in a
// synthetic scene and answers from image content alone.
class MockBackend : public InferenceBackend {
 public:
  explicit MockBackend(std::vector<NamedColor> palette);

  std::string caption(const EntityViews& views, const std::string& prompt) override;
  std::vector<std::string> tag(const std::vector<std::string>& captions,
                               const std::string& prompt) override;
  std::vector<std::string> relations(const std::vector<PairDescriptor>& pairs,
                                     const std::string& prompt) override;
  double score(const ViewImage& crop, const std::string& caption) override;
  std::vector<std::string> match_classes(const std::vector<std::string>& tags,
                                         const std::vector<std::string>& classes) override;

  // Rule table used by relations(): "on" when src rests on dst (footprints
  // overlap and src starts where dst ends), "under" for the reverse,
  // "next to" otherwise.
  static std::string relation_rule(const PairDescriptor& pair);

 private:
  const NamedColor* lookup(const Rgb8& color) const;
  const NamedColor* lookup(const std::string& name) const;

  std::vector<NamedColor> palette_;
};

struct HttpBackendConfig {
  std::string url;        // full chat-completions endpoint
  std::string key;        // bearer token, may be empty
  std::string model = "gpt-4o";
  std::string score_url;  // optional image-text similarity endpoint
  int timeout_seconds = 30;
  int retries = 2;

  // SEMFUSE_LLM_URL, SEMFUSE_LLM_KEY, SEMFUSE_LLM_MODEL, SEMFUSE_SCORE_URL.
  static HttpBackendConfig from_environment();
};

// OpenAI-compatible chat-completions client with base64 PNG attachments.
// Uses `prompts.score` and `prompts.match` for the calls that carry no
// caller-supplied prompt.
std::unique_ptr<InferenceBackend> make_http_backend(const HttpBackendConfig& config,
                                                   const PromptSet& prompts);

}  // namespace semfuse
