#pragma once

#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "scenegen/error.hpp"
#include "scenegen/llm_parse.hpp"
#include "scenegen/log.hpp"

namespace scenegen {

struct LlmConfig {
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "LLM_API_KEY";
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.7;              // layout queries; diversity across the k proposals
  double description_temperature = 0.0;  // description query
  double timeout_s = 60.0;
  int max_retries = 3;

  void validate() const {
    require(max_retries >= 0, Errc::config_error, "llm.max_retries must be >= 0");
    require(timeout_s > 0, Errc::config_error, "llm.timeout must be > 0");
    require(temperature >= 0 && description_temperature >= 0, Errc::config_error, "llm temperature must be >= 0");
  }
};

enum class PromptKind { layout, description };

struct PromptTemplate {
  PromptKind kind;
  std::string text;

  std::string render(std::string_view caption, std::string_view objects = {}) const {
    std::string out = text;
    const auto sub = [&out](std::string_view slot, std::string_view value) {
      for (std::size_t p = out.find(slot); p != std::string::npos; p = out.find(slot, p + value.size()))
        out.replace(p, slot.size(), value);
    };
    sub("{objects}", objects);
    sub("{caption}", caption);
    return out;
  }
};

inline const PromptTemplate& layout_prompt() {
  static const PromptTemplate t{
      PromptKind::layout,
      "You are an intelligent bounding box generator. I will provide you with a caption for a photo, image, a "
      "detailed scene, or a painting. Your task is to generate the bounding boxes for the objects mentioned in the "
      "caption, along with a background prompt describing the scene. The images are of size 512x512. The top-left "
      "corner has coordinates [0, 0]. The bottom-right corner has coordinates [512, 512]. The bounding boxes should "
      "not overlap or go beyond the image boundaries. Each bounding box should be in the format of (object name, "
      "[top-left x coordinate, top-left y coordinate, box width, box height]) and include exactly one object (i.e., "
      "start the object name with \"a\" or \"an\" if possible). Do not put objects that are already provided in the "
      "bounding boxes into the background prompt. Do not include non-existing or excluded objects in the background "
      "prompt. If needed, you can make reasonable guesses. Please refer to the example below for the desired "
      "format.\n\n"
      "Caption: In the quiet countryside, a red farmhouse stands with an old-fashioned charm. Nearby, a weathered "
      "picket fence surrounds a garden of wildflowers. An antique tractor, though worn, rests as a reminder of hard "
      "work. A scarecrow watches over fields of swaying crops. The air carries the scent of earth and hay. Set "
      "against rolling hills, this farmhouse tells a story of connection to the land and its traditions\n"
      "Objects: [('a red farmhouse', [105, 228, 302, 245]), ('a weathered picket fence', [4, 385, 504, 112]), ('an "
      "antique tractor', [28, 382, 157, 72]), ('a scarecrow', [368, 271, 66, 156]) ]\n"
      "Background prompt: A realistic image of a quiet countryside with rolling hills\n\n"
      "Caption: A realistic image of landscape scene depicting a green car parking on the left of a blue truck, with "
      "a red air balloon and a bird in the sky\n"
      "Objects: [('a green car', [21, 181, 211, 159]), ('a blue truck', [269, 181, 209, 160]), ('a red air "
      "balloon', [66, 8, 145, 135]), ('a bird', [296, 42, 143, 100])]\n"
      "Background prompt: A realistic image of a landscape scene\n\n"
      "Caption: {caption}\n"
      "Objects:"};
  return t;
}

inline const PromptTemplate& description_prompt() {
  static const PromptTemplate t{
      PromptKind::description,
      "You are an intelligent description extractor. I will give you a list of the objects and a corresponding "
      "text prompt. For each object, extract its respective description or details mentioned in the text prompt. "
      "The description should strictly contain fine details about the object and must not contain information "
      "regarding location or abstract details about the object. The description must also contain the name of the "
      "object being described. For objects that do not have concrete descriptions mentioned, return the object "
      "itself in that case. The output should be a Python dictionary with the key as object and the value as "
      "description. The description should start with 'A realistic photo of object' followed by its "
      "characteristics. Sort the entries as per objects that are spatially behind (background) followed by objects "
      "that are spatially ahead (foreground). For instance object \"a garden view\" should precede the \"table\". "
      "Make an intelligent guess if possible. Here are some examples:\n\n"
      "list of objects: [a Golden Retriever,a white cat,a wooden table,a vase of vibrant flowers,a sleek modern "
      "television]\n"
      "text prompt: In a cozy living room, a heartwarming scene unfolds. A friendly and affectionate Golden "
      "Retriever with a soft, golden-furred coat rests contently on a plush rug, its warm eyes filled with joy. "
      "Nearby, a graceful and elegant white cat stretches leisurely, showcasing its pristine and fluffy fur. A "
      "sturdy wooden table with polished edges stands gracefully in the center, adorned with a vase of vibrant "
      "flowers adding a touch of freshness. On the wall, a sleek modern television stands ready to provide "
      "entertainment. The ambiance is warm, inviting and filled with a sense of companionship and relaxation.\n"
      "output: {a sleek modern television: A realistic photo of a sleek modern television.,\n"
      "a wooden table: A realistic photo of a sturdy wooden table with polished edges.,\n"
      "vase of vibrant flowers: A realistic photo of a vase of vibrant flowers adding a touch of freshness.,\n"
      "a Golden Retriever: 'A realistic photo of a friendly and affectionate Golden Retriever with a soft, "
      "golden-furred coat and its warm eyes filled with joy.,\n"
      "a white cat: 'A realistic photo of a graceful and elegant white cat stretches leisurely, showcasing its "
      "pristine and fluffy fur.}\n\n"
      "list of objects: [{objects}]\n"
      "text prompt: {caption}\n"
      "output:"};
  return t;
}

struct ChatRequest {
  std::string prompt;
  double temperature = 0.0;
};

// Chat-completion transport. Implementations throw Error(transport_error)
// for retryable failures and Error(quota_or_auth_error) for 401/429.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

// Deterministic scripted backend: replies in order, then repeats the last.
class MockLlm final : public ChatBackend {
 public:
  explicit MockLlm(std::vector<std::string> script) : script_(std::move(script)) {
    require(!script_.empty(), Errc::precondition, "mock_llm: script must be non-empty");
  }

  std::string complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    prompts_.push_back(request.prompt);
    const std::size_t i = std::min(calls_, script_.size() - 1);
    ++calls_;
    return script_[i];
  }

  std::size_t call_count() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  std::vector<std::string> script_;
  std::vector<std::string> prompts_;
  std::size_t calls_ = 0;
  mutable std::mutex mutex_;
};

inline std::unique_ptr<MockLlm> mock_llm(std::vector<std::string> script) {
  return std::make_unique<MockLlm>(std::move(script));
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline SplitUrl split_url(std::string_view url) {
  const std::size_t scheme = url.find("://");
  require(scheme != std::string_view::npos, Errc::config_error, "endpoint url needs a scheme: " + std::string(url));
  const std::string_view proto = url.substr(0, scheme);
  require(proto == "http" || proto == "https", Errc::config_error, "endpoint url must be http or https: " + std::string(url));
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

// OpenAI-style chat completion over HTTP:
//   {"model", "temperature", "messages":[{"role":"user","content":prompt}]}
// with the reply at choices[0].message.content. The API key is read from
// the configured environment variable on each request and only ever placed
// in the Authorization header.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(LlmConfig config) : config_(std::move(config)) { config_.validate(); }

  std::string complete(const ChatRequest& request) override {
    const SplitUrl url = split_url(config_.endpoint_url);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    const auto usecs = static_cast<time_t>((config_.timeout_s - secs) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    const nlohmann::json body = {{"model", config_.model_name},
                                 {"temperature", request.temperature},
                                 {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})}};
    log_info("llm: POST " + config_.endpoint_url + " model=" + config_.model_name);
    const auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::transport_error, "llm request failed: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403 || res->status == 429)
      throw Error(Errc::quota_or_auth_error, "llm endpoint returned HTTP " + std::to_string(res->status));
    if (res->status != 200) throw Error(Errc::transport_error, "llm endpoint returned HTTP " + std::to_string(res->status));
    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw Error(Errc::transport_error, "llm response is not JSON");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::transport_error, "llm response lacks choices[0].message.content");
    }
  }

 private:
  LlmConfig config_;
};

struct RequestStats {
  int calls = 0;
  int retries = 0;
};

namespace detail {

template <typename Validate>
std::string request_validated(ChatBackend& backend, const ChatRequest& req, int max_retries, Validate&& validate,
                              RequestStats* stats) {
  std::optional<Error> last;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (stats) {
      ++stats->calls;
      if (attempt > 0) ++stats->retries;
    }
    std::string reply;
    try {
      reply = backend.complete(req);
    } catch (const Error& e) {
      if (e.code() == Errc::quota_or_auth_error) throw;
      log_warn(std::string("llm: attempt ") + std::to_string(attempt + 1) + " failed: " + e.what());
      last = e;
      continue;
    }
    try {
      validate(reply);
      return reply;
    } catch (const Error& e) {
      log_warn(std::string("llm: unparsable reply on attempt ") + std::to_string(attempt + 1) + ": " + e.what());
      last = e;
    }
  }
  if (last && last->code() == Errc::transport_error)
    throw Error(Errc::transport_error, std::string("retries exhausted: ") + last->what());
  throw Error(Errc::unparsable_after_retries, last ? last->what() : "no attempts made");
}

}  // namespace detail

// k independent layout completions, each parse-validated before acceptance.
inline std::vector<std::string> request_layouts(std::string_view caption, int k, const LlmConfig& config,
                                                ChatBackend& backend, RequestStats* stats = nullptr) {
  require(!detail::trim(caption).empty(), Errc::precondition, "request_layouts: empty caption");
  require(k >= 1, Errc::precondition, "request_layouts: k must be >= 1");
  config.validate();
  const ChatRequest req{layout_prompt().render(caption), config.temperature};
  std::vector<std::string> replies;
  replies.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    replies.push_back(detail::request_validated(
        backend, req, config.max_retries, [](const std::string& r) { parse_layout_response(r); }, stats));
  return replies;
}

inline std::string request_descriptions(std::string_view caption, const std::vector<std::string>& names,
                                        const LlmConfig& config, ChatBackend& backend, RequestStats* stats = nullptr) {
  require(!detail::trim(caption).empty(), Errc::precondition, "request_descriptions: empty caption");
  require(!names.empty(), Errc::precondition, "request_descriptions: empty object list");
  config.validate();
  std::string list;
  for (std::size_t i = 0; i < names.size(); ++i) list += (i ? "," : "") + names[i];
  const ChatRequest req{description_prompt().render(caption, list), config.description_temperature};
  return detail::request_validated(
      backend, req, config.max_retries, [&names](const std::string& r) { parse_description_response(r, names); },
      stats);
}

}  // namespace scenegen
