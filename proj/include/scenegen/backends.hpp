#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scenegen/compose.hpp"
#include "scenegen/toy_world.hpp"

namespace scenegen {

// Text-to-image model.
class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  virtual ImageBuffer generate(std::string_view prompt, std::uint64_t seed) const = 0;
};

struct ComposeRequest {
  const ImageBuffer* source = nullptr;
  const Mask* mask = nullptr;
  std::string description;
  const ImageBuffer* reference = nullptr;  // exemplar; null in the global phase
  int steps = 50;
  int n_inner = 1;
  std::uint64_t seed = 0;
};

// Masked, content-conditioned editing: everything outside the mask is kept.
class Compositor {
 public:
  virtual ~Compositor() = default;
  virtual ImageBuffer compose(const ComposeRequest& req) const = 0;
};

struct Detection {
  bool present = false;
  double confidence = 0.0;  // in [0,1]
};

class DetectorOracle {
 public:
  virtual ~DetectorOracle() = default;
  virtual Detection detect(const ImageBuffer& image, std::string_view label) const = 0;
};

// Draws an exact sample from the component the prompt maps to.
class ToyGenerator final : public ImageGenerator {
 public:
  explicit ToyGenerator(const ToyWorld& world) : world_(world) {}

  ImageBuffer generate(std::string_view prompt, std::uint64_t seed) const override {
    require(!prompt.empty(), Errc::precondition, "generate: empty prompt");
    Rng rng(seed);
    return world_.mixture().sample_component(world_.class_of_text(prompt), rng);
  }

 private:
  const ToyWorld& world_;
};

struct ToyComposeOptions {
  double text_strength = 3.0;        // conditioning weight without a reference
  double reference_strength = 30.0;  // conditioning weight with a reference
  double text_guidance = 0.0;        // guidance scale without a reference
  double reference_guidance = 20.0;  // guidance scale with a reference
  double lambda = 1.0;
  double gamma = 100.0;
};

// guided_compose over the toy mixture. The denoiser is conditioned on the
// reference's image embedding when one is given (else on the description's
// text embedding) with its likelihood restricted to the mask, and the
// sampler is steered by the multimodal guidance loss.
class ToyCompositor final : public Compositor {
 public:
  ToyCompositor(const ToyWorld& world, const NoiseSchedule& sched, ToyComposeOptions opts = {})
      : world_(world), sched_(sched), opts_(opts), perceptual_(3) {}

  const ToyComposeOptions& options() const noexcept { return opts_; }

  ImageBuffer compose(const ComposeRequest& req) const override {
    require(req.source && req.mask, Errc::precondition, "compose: source and mask are required");
    const bool has_ref = req.reference != nullptr;
    const auto& oracle = world_.oracle();

    ComposeOptions co;
    co.steps = req.steps;
    co.n_inner = req.n_inner;
    co.seed = req.seed;
    co.condition.embedding = has_ref ? oracle.embed_image(*req.reference) : oracle.embed_text(req.description);
    co.condition.region = req.mask;
    co.condition.strength = has_ref ? opts_.reference_strength : opts_.text_strength;

    GuidanceSpec spec;
    spec.description = req.description;
    if (has_ref) spec.reference = *req.reference;
    spec.mask = *req.mask;
    spec.lambda = has_ref ? opts_.lambda : 0.0;
    spec.gamma = opts_.gamma;
    spec.x_init = *req.source;
    spec.scale = has_ref ? opts_.reference_guidance : opts_.text_guidance;
    return guided_compose(*req.source, spec, oracle, &perceptual_, world_.mixture(), sched_, co);
  }

 private:
  const ToyWorld& world_;
  const NoiseSchedule& sched_;
  ToyComposeOptions opts_;
  RandomFeaturePerceptual perceptual_;
};

// Presence if any square window (sides in `windows`, every integer
// position) has embedding cosine >= floor with the label's text embedding.
// Window embeddings come from a summed-area table of per-pixel embedding
// contributions, which is exact because the toy oracle is linear.
class ToyDetector final : public DetectorOracle {
 public:
  ToyDetector(const ToyWorld& world, double floor, std::vector<int> windows = {4, 8})
      : world_(world), floor_(floor), windows_(std::move(windows)) {
    require(floor > -1.0 && floor < 1.0, Errc::config_error, "toy detector: floor must be in (-1,1)");
    for (int w : windows_) require(w >= 1, Errc::config_error, "toy detector: window sides must be >= 1");
  }

  double floor() const noexcept { return floor_; }
  const std::vector<int>& windows() const noexcept { return windows_; }

  Detection detect(const ImageBuffer& image, std::string_view label) const override {
    return detect_all(image, {std::string(label)}).front();
  }

  // One summed-area table shared by several labels.
  std::vector<Detection> detect_all(const ImageBuffer& image, const std::vector<std::string>& labels) const {
    const auto& oracle = world_.oracle();
    require(image.channels == 3 && image.height == world_.size() && image.width == world_.size(),
            Errc::shape_mismatch, "toy detector: image shape " + image.shape_str());
    const int H = image.height, W = image.width;
    const std::size_t D = oracle.dim();
    // sat[(y*(W+1)+x)*D + d] = sum of contributions over [0,y) x [0,x).
    std::vector<double> sat(static_cast<std::size_t>(H + 1) * (W + 1) * D, 0.0);
    const auto at = [&](int y, int x) { return (static_cast<std::size_t>(y) * (W + 1) + x) * D; };
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Embedding e = oracle.embed_window(image, {x, y, x + 1, y + 1});
        for (std::size_t d = 0; d < D; ++d)
          sat[at(y + 1, x + 1) + d] = e[d] + sat[at(y, x + 1) + d] + sat[at(y + 1, x) + d] - sat[at(y, x) + d];
      }

    std::vector<Embedding> targets;
    for (const auto& l : labels) targets.push_back(oracle.embed_text(l));
    std::vector<double> best(labels.size(), -1.0);
    Embedding win(D);
    for (int side : windows_) {
      if (side > H || side > W) continue;
      for (int y = 0; y + side <= H; ++y)
        for (int x = 0; x + side <= W; ++x) {
          for (std::size_t d = 0; d < D; ++d)
            win[d] = sat[at(y + side, x + side) + d] - sat[at(y, x + side) + d] - sat[at(y + side, x) + d] +
                     sat[at(y, x) + d];
          const double nw = norm(win);
          if (nw == 0.0) continue;
          for (std::size_t k = 0; k < targets.size(); ++k) {
            const double nt = norm(targets[k]);
            if (nt == 0.0) continue;
            best[k] = std::max(best[k], dot(win, targets[k]) / (nw * nt));
          }
        }
    }
    std::vector<Detection> out;
    for (double b : best) out.push_back({b >= floor_, std::clamp(b, 0.0, 1.0)});
    return out;
  }

 private:
  const ToyWorld& world_;
  double floor_;
  std::vector<int> windows_;
};

}  // namespace scenegen
