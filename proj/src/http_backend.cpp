#include "semfuse/backend.hpp"
#include "semfuse/png_io.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <sstream>

namespace semfuse {

using nlohmann::json;

HttpBackendConfig HttpBackendConfig::from_environment() {
  HttpBackendConfig c;
  const auto env = [](const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  c.url = env("SEMFUSE_LLM_URL");
  c.key = env("SEMFUSE_LLM_KEY");
  if (auto m = env("SEMFUSE_LLM_MODEL"); !m.empty()) c.model = m;
  c.score_url = env("SEMFUSE_SCORE_URL");
  return c;
}

namespace {

std::string base64(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string data_url(const RgbImage& image) {
  return "data:image/png;base64," + base64(encode_rgb_png(image));
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw BackendError("invalid backend URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

std::vector<std::string> parse_string_array(const std::string& content, std::size_t expected) {
  const auto open = content.find('[');
  const auto close = content.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw BackendError("backend reply is not a JSON array");
  }
  json j;
  try {
    j = json::parse(content.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    throw BackendError(std::string("backend reply: ") + e.what());
  }
  std::vector<std::string> out;
  for (const auto& item : j) {
    if (!item.is_string()) throw BackendError("backend reply array holds a non-string");
    out.push_back(item.get<std::string>());
  }
  if (out.size() != expected) {
    throw BackendError("backend reply has " + std::to_string(out.size()) + " entries, expected " +
                       std::to_string(expected));
  }
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\".");
  return s.substr(b, e - b + 1);
}

class HttpBackend : public InferenceBackend {
 public:
  HttpBackend(HttpBackendConfig config, PromptSet prompts)
      : config_(std::move(config)), prompts_(std::move(prompts)) {
    if (config_.url.empty()) throw BackendError("SEMFUSE_LLM_URL is not set");
    chat_ = split_url(config_.url);
    if (!config_.score_url.empty()) score_ = split_url(config_.score_url);
  }

  std::string caption(const EntityViews& views, const std::string& prompt) override {
    json content = json::array({{{"type", "text"}, {"text", prompt}}});
    const auto attach = [&](const ViewImage* v) {
      if (v == nullptr) return;
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(v->image)}}}});
    };
    attach(views.crop);
    for (const ViewImage* v : views.masked) attach(v);
    return trim(chat(content));
  }

  std::vector<std::string> tag(const std::vector<std::string>& captions,
                               const std::string& prompt) override {
    if (captions.empty()) return {};
    std::ostringstream text;
    text << prompt << "\n";
    for (std::size_t i = 0; i < captions.size(); ++i) text << (i + 1) << ". " << captions[i] << "\n";
    return parse_string_array(chat(text_content(text.str())), captions.size());
  }

  std::vector<std::string> relations(const std::vector<PairDescriptor>& pairs,
                                     const std::string& prompt) override {
    if (pairs.empty()) return {};
    json list = json::array();
    const auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
    for (const auto& p : pairs) {
      list.push_back({{"source", {{"tag", p.src_tag}, {"center", vec(p.src_center)},
                                  {"min", vec(p.src_bounds.min)}, {"max", vec(p.src_bounds.max)}}},
                      {"target", {{"tag", p.dst_tag}, {"center", vec(p.dst_center)},
                                  {"min", vec(p.dst_bounds.min)}, {"max", vec(p.dst_bounds.max)}}},
                      {"vector", vec(p.vector)}});
    }
    return parse_string_array(chat(text_content(prompt + "\n" + list.dump())), pairs.size());
  }

  double score(const ViewImage& crop, const std::string& caption) override {
    double cosine = 0.0;
    if (!config_.score_url.empty()) {
      const json body = {{"image", base64(encode_rgb_png(crop.image))}, {"text", caption}};
      const json reply = post(score_, body);
      if (!reply.contains("cosine") || !reply["cosine"].is_number()) {
        throw BackendError("score reply lacks a numeric \"cosine\"");
      }
      cosine = reply["cosine"].get<double>();
    } else {
      json content = json::array({{{"type", "text"}, {"text", prompts_.score + "\nCaption: " + caption}},
                                  {{"type", "image_url"}, {"image_url", {{"url", data_url(crop.image)}}}}});
      const std::string reply = chat(content);
      try {
        cosine = std::stod(trim(reply));
      } catch (const std::exception&) {
        throw BackendError("score reply is not a number: " + reply);
      }
    }
    return std::clamp((cosine + 1.0) / 2.0, 0.0, 1.0);
  }

  std::vector<std::string> match_classes(const std::vector<std::string>& tags,
                                         const std::vector<std::string>& classes) override {
    if (tags.empty()) return {};
    const json body = {{"tags", tags}, {"classes", classes}};
    return parse_string_array(chat(text_content(prompts_.match + "\n" + body.dump())), tags.size());
  }

 private:
  static json text_content(const std::string& text) {
    return json::array({{{"type", "text"}, {"text", text}}});
  }

  std::string chat(const json& content) {
    const json body = {{"model", config_.model},
                       {"temperature", 0},
                       {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
    const json reply = post(chat_, body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("malformed chat reply: ") + e.what());
    }
  }

  json post(const Endpoint& endpoint, const json& body) {
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.key.empty()) headers.emplace("Authorization", "Bearer " + config_.key);
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      auto res = client.Post(endpoint.path, headers, payload, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status >= 200 && res->status < 300) {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          throw BackendError(std::string("backend returned invalid JSON: ") + e.what());
        }
      } else if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
      } else {
        throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      spdlog::warn("backend request to {} failed ({}), attempt {}/{}", endpoint.origin, last_error,
                   attempt + 1, config_.retries + 1);
    }
    throw BackendError("backend unreachable: " + last_error);
  }

  HttpBackendConfig config_;
  Endpoint chat_;
  Endpoint score_;
  PromptSet prompts_;
};

}  // namespace

std::unique_ptr<InferenceBackend> make_http_backend(const HttpBackendConfig& config,
                                                   const PromptSet& prompts) {
  return std::make_unique<HttpBackend>(config, prompts);
}

}  // namespace semfuse
