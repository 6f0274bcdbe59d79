#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "scenegen/backends.hpp"
#include "scenegen/guidance.hpp"
#include "scenegen/llm_client.hpp"
#include "scenegen/log.hpp"
#include "scenegen/png_io.hpp"

namespace scenegen {

inline std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out(4 * ((size + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(size));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  require(text.size() % 4 == 0, Errc::backend_error, "base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  require(n >= 0, Errc::backend_error, "base64: invalid input");
  // EVP_DecodeBlock counts padding as zero bytes.
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string image_to_b64(const ImageBuffer& img) {
  const auto png = encode_png(img);
  return base64_encode(png.data(), png.size());
}

inline ImageBuffer image_from_b64(std::string_view b64) {
  try {
    return decode_png(base64_decode(b64));
  } catch (const Error& e) {
    throw Error(Errc::backend_error, std::string("bridge image payload: ") + e.what());
  }
}

inline ImageBuffer mask_image(const Mask& m) {
  ImageBuffer img(1, m.height, m.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) img.data[i] = m.data[i] ? 1.0 : 0.0;
  return img;
}

// Tight pixel rectangle around the mask's support.
inline PixelRect mask_bounds(const Mask& m) {
  PixelRect r{m.width, m.height, 0, 0};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.data[static_cast<std::size_t>(y) * m.width + x]) {
        r.x0 = std::min(r.x0, x);
        r.y0 = std::min(r.y0, y);
        r.x1 = std::max(r.x1, x + 1);
        r.y1 = std::max(r.y1, y + 1);
      }
  if (r.x1 <= r.x0 || r.y1 <= r.y0) throw Error(Errc::degenerate_box, "mask is empty");
  return r;
}

inline ImageBuffer crop(const ImageBuffer& img, const PixelRect& r) {
  ImageBuffer out(img.channels, r.height(), r.width());
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) out.at(c, y, x) = img.at(c, r.y0 + y, r.x0 + x);
  return out;
}

struct BridgeConfig {
  std::string url = "http://127.0.0.1:8765";
  double timeout_s = 120.0;
  int max_retries = 2;              // transport failures only
  double detector_threshold = 0.3;  // presence if detection score >= this

  void validate() const {
    split_url(url);
    require(timeout_s > 0, Errc::config_error, "bridge.timeout_s must be > 0");
    require(max_retries >= 0, Errc::config_error, "bridge.max_retries must be >= 0");
    require(detector_threshold >= 0 && detector_threshold <= 1, Errc::config_error,
            "bridge.detector_threshold must be in [0,1]");
  }
};

// JSON-over-HTTP client for the model bridge. 400 and 503 (and any other
// non-2xx) become BackendError; connection failures are retried and then
// surface as TransportError.
class BridgeClient {
 public:
  explicit BridgeClient(BridgeConfig config) : config_(std::move(config)) { config_.validate(); }

  const BridgeConfig& config() const noexcept { return config_; }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    const SplitUrl url = split_url(config_.url);
    const std::string full = (url.path == "/" ? std::string() : url.path) + path;
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      httplib::Client client(url.origin);
      const auto secs = static_cast<time_t>(config_.timeout_s);
      const auto usecs = static_cast<time_t>((config_.timeout_s - secs) * 1e6);
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      const auto res = client.Post(full, payload, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        log_warn("bridge: POST " + path + " attempt " + std::to_string(attempt + 1) + " failed: " + last_error);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        std::string detail;
        const auto err = nlohmann::json::parse(res->body, nullptr, false);
        if (!err.is_discarded() && err.is_object() && err.contains("error")) detail = ": " + err["error"].dump();
        throw Error(Errc::backend_error, "bridge " + path + " returned HTTP " + std::to_string(res->status) + detail);
      }
      auto reply = nlohmann::json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.is_object())
        throw Error(Errc::backend_error, "bridge " + path + " returned non-JSON body");
      log_debug("bridge: " + path + " model_id=" + reply.value("model_id", std::string("?")));
      return reply;
    }
    throw Error(Errc::transport_error, "bridge " + path + " unreachable: " + last_error);
  }

  template <typename T>
  static T field(const nlohmann::json& j, const char* key, const char* path) {
    try {
      return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::backend_error, std::string("bridge ") + path + " response lacks valid '" + key + "'");
    }
  }

 private:
  BridgeConfig config_;
};

// CLIP behind the bridge. Masked embeddings crop the mask's bounding
// rectangle before encoding, as CLIP expects a whole picture. There is no
// remote Jacobian; the guidance loss and its gradient come from
// /v1/guidance_grad in one call.
class BridgeOracle final : public EmbeddingOracle {
 public:
  explicit BridgeOracle(const BridgeClient& client) : client_(client) {}

  std::size_t dim() const override {
    std::lock_guard lock(mutex_);
    if (!dim_) {
      const auto r = client_.post("/v1/embed_text", {{"texts", nlohmann::json::array({"a photo"})}});
      dim_ = BridgeClient::field<std::size_t>(r, "dim", "/v1/embed_text");
    }
    return *dim_;
  }

  Embedding embed_image(const ImageBuffer& image, const Mask* mask = nullptr) const override {
    const ImageBuffer view = mask ? crop(image, mask_bounds(*mask)) : image;
    const auto r = client_.post("/v1/embed_image", {{"images", nlohmann::json::array({image_to_b64(view)})}});
    return first_row(r, "/v1/embed_image");
  }

  Embedding embed_text(std::string_view text) const override {
    const auto r = client_.post("/v1/embed_text", {{"texts", nlohmann::json::array({std::string(text)})}});
    return first_row(r, "/v1/embed_text");
  }

  ImageBuffer image_vjp(const ImageBuffer&, const Mask*, std::span<const double>) const override {
    throw Error(Errc::backend_error, "bridge oracle has no image Jacobian; use clip_loss_and_grad");
  }

  // Pixels travel as 8-bit PNG, so x is clamped to [0,1] and quantized on
  // the way out.
  LossGrad clip_loss_and_grad(const ImageBuffer& x, const Mask& mask, std::string_view text,
                              const ImageBuffer* reference, double lambda) const override {
    nlohmann::json body = {{"image", image_to_b64(x)},
                           {"mask", image_to_b64(mask_image(mask))},
                           {"text", std::string(text)},
                           {"lambda", lambda}};
    body["ref_image"] = reference && reference->size() > 0 ? nlohmann::json(image_to_b64(*reference)) : nullptr;
    const auto r = client_.post("/v1/guidance_grad", body);
    LossGrad out;
    out.loss = BridgeClient::field<double>(r, "loss", "/v1/guidance_grad");
    auto grad = BridgeClient::field<std::vector<double>>(r, "grad", "/v1/guidance_grad");
    if (grad.size() != x.size())
      throw Error(Errc::backend_error, "bridge gradient has " + std::to_string(grad.size()) + " values, image has " +
                                           std::to_string(x.size()));
    out.grad = ImageBuffer(x.channels, x.height, x.width);
    out.grad.data = std::move(grad);
    if (!out.grad.all_finite() || !std::isfinite(out.loss))
      throw Error(Errc::non_finite_gradient, "bridge returned a non-finite gradient");
    return out;
  }

 private:
  static Embedding first_row(const nlohmann::json& r, const char* path) {
    auto rows = BridgeClient::field<std::vector<Embedding>>(r, "embeddings", path);
    if (rows.empty() || rows.front().empty()) throw Error(Errc::backend_error, std::string("bridge ") + path + " returned no rows");
    return std::move(rows.front());
  }

  const BridgeClient& client_;
  mutable std::mutex mutex_;
  mutable std::optional<std::size_t> dim_;
};

class BridgeGenerator final : public ImageGenerator {
 public:
  BridgeGenerator(const BridgeClient& client, int steps) : client_(client), steps_(steps) {}

  ImageBuffer generate(std::string_view prompt, std::uint64_t seed) const override {
    require(!prompt.empty(), Errc::precondition, "generate: empty prompt");
    const auto r = client_.post("/v1/txt2img", {{"prompt", std::string(prompt)}, {"steps", steps_}, {"seed", seed}});
    return image_from_b64(BridgeClient::field<std::string>(r, "image", "/v1/txt2img"));
  }

 private:
  const BridgeClient& client_;
  int steps_;
};

// Exemplar-guided composition on the server, which owns the denoiser and
// therefore the guided sampling loop; lambda, gamma and the gradient scale
// are forwarded. Without a reference "ref" is null and the description
// alone drives the edit.
class BridgeCompositor final : public Compositor {
 public:
  BridgeCompositor(const BridgeClient& client, double lambda = 1.0, double gamma = 100.0, double scale = 1.0)
      : client_(client), lambda_(lambda), gamma_(gamma), scale_(scale) {}

  ImageBuffer compose(const ComposeRequest& req) const override {
    require(req.source && req.mask, Errc::precondition, "compose: source and mask are required");
    nlohmann::json body = {{"source", image_to_b64(*req.source)},
                           {"mask", image_to_b64(mask_image(*req.mask))},
                           {"prompt", req.description},
                           {"steps", req.steps},
                           {"n_inner", req.n_inner},
                           {"seed", req.seed},
                           {"lambda", lambda_},
                           {"gamma", gamma_},
                           {"guidance_scale", scale_}};
    body["ref"] = req.reference ? nlohmann::json(image_to_b64(*req.reference)) : nullptr;
    const auto r = client_.post("/v1/compose", body);
    ImageBuffer out = image_from_b64(BridgeClient::field<std::string>(r, "image", "/v1/compose"));
    if (!out.same_shape(*req.source))
      throw Error(Errc::backend_error, "bridge compose returned " + out.shape_str() + " for source " +
                                           req.source->shape_str());
    return out;
  }

 private:
  const BridgeClient& client_;
  double lambda_, gamma_, scale_;
};

class BridgeDetector final : public DetectorOracle {
 public:
  explicit BridgeDetector(const BridgeClient& client) : client_(client) {}

  Detection detect(const ImageBuffer& image, std::string_view label) const override {
    const auto r = client_.post("/v1/detect", {{"image", image_to_b64(image)}, {"labels", nlohmann::json::array({std::string(label)})}});
    double best = 0.0;
    try {
      for (const auto& d : r.at("detections"))
        if (d.at("label").get<std::string>() == label) best = std::max(best, d.at("score").get<double>());
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::backend_error, "bridge /v1/detect response is malformed");
    }
    best = std::clamp(best, 0.0, 1.0);
    return {best >= client_.config().detector_threshold, best};
  }

 private:
  const BridgeClient& client_;
};

}  // namespace scenegen
