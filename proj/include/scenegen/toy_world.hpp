#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "scenegen/diffusion.hpp"
#include "scenegen/guidance.hpp"

namespace scenegen {

// Offline stand-in for the real models. Object classes are flat colours
// (one channel pushed to 0.5 +/- 0.35); background classes are zero-mean
// textures around mid-gray, so their colour-sum embedding vanishes and a
// background patch is nearly orthogonal to every object text. Text maps to
// a class through registered nouns; the class's text embedding equals the
// oracle's embedding direction for its colour.
struct ToyClassDef {
  std::string label;
  std::array<double, 3> rgb;  // object colour; unused for backgrounds
  int pattern;                // -1 for objects, texture id for backgrounds
  std::array<double, 3> tint;  // per-channel texture sign for backgrounds
  std::vector<std::string> terms;
};

inline const std::vector<ToyClassDef>& toy_vocabulary() {
  static const std::vector<ToyClassDef> vocab = {
      {"red", {0.85, 0.5, 0.5}, -1, {}, {"apple", "farmhouse", "barn", "air balloon", "balloon", "tomato", "rose",
                                          "strawberry", "ladybug", "fire engine"}},
      {"cyan", {0.15, 0.5, 0.5}, -1, {}, {"pool", "fountain", "glacier", "kite", "dolphin", "teapot", "umbrella",
                                           "iceberg"}},
      {"green", {0.5, 0.85, 0.5}, -1, {}, {"tractor", "frog", "tree", "cactus", "car", "parrot", "bicycle", "turtle"}},
      {"magenta", {0.5, 0.15, 0.5}, -1, {}, {"scarecrow", "flamingo", "flowers", "flower", "lamp", "television",
                                              "sofa", "butterfly"}},
      {"blue", {0.5, 0.5, 0.85}, -1, {}, {"truck", "bird", "boat", "whale", "chair", "mug", "table", "sailboat"}},
      {"yellow", {0.5, 0.5, 0.15}, -1, {}, {"fence", "cat", "dog", "golden retriever", "duck", "sunflower", "bus",
                                             "lemon"}},
      {"bg-country", {}, 0, {1, 1, -1}, {"countryside", "farm", "field", "hills", "meadow"}},
      {"bg-landscape", {}, 1, {-1, 1, 1}, {"landscape", "sky", "mountains", "lake", "park"}},
      {"bg-indoor", {}, 2, {1, -1, 1}, {"living room", "room", "kitchen", "interior", "office"}},
      {"bg-city", {}, 3, {-1, -1, 1}, {"city", "street", "beach", "harbor", "town"}},
  };
  return vocab;
}

struct ToyWorldOptions {
  int size = 32;
  std::uint64_t seed = 0;
  double sigma = 0.005;  // per-pixel stddev of every mixture component
  std::size_t dim = 64;
  double jitter = 0.2;
  double texture_amplitude = 0.15;
};

class ToyWorld {
 public:
  explicit ToyWorld(ToyWorldOptions opts = {}) : opts_(opts) {
    require(opts.size >= 8, Errc::config_error, "toy world: image size must be >= 8");
    require(opts.sigma >= 0, Errc::config_error, "toy world: sigma must be >= 0");
    oracle_ = std::make_unique<ToyLinearOracle>(3, opts.size, opts.size, derive_seed(opts.seed, "toy-world/oracle"),
                                                opts.dim, opts.jitter);
    const auto& vocab = toy_vocabulary();
    std::vector<MixtureComponent> comps;
    for (const auto& def : vocab) {
      ImageBuffer mean = class_mean(def);
      Embedding key = def.pattern < 0 ? oracle_->color_direction(def.rgb) : oracle_->embed_image(mean);
      oracle_->register_text(def.label, key);
      for (const auto& term : def.terms) oracle_->register_text(term, key);
      comps.push_back({1.0 / static_cast<double>(vocab.size()), std::move(mean), opts.sigma, std::move(key),
                       def.label});
    }
    mixture_ = std::make_unique<ToyGaussianMixtureBackend>(std::move(comps));
  }

  const ToyWorldOptions& options() const noexcept { return opts_; }
  int size() const noexcept { return opts_.size; }
  Canvas image_canvas() const noexcept { return {opts_.size, opts_.size}; }
  const ToyLinearOracle& oracle() const noexcept { return *oracle_; }
  const ToyGaussianMixtureBackend& mixture() const noexcept { return *mixture_; }

  // Class index a text maps to: the component whose key is closest to the
  // text embedding. Unregistered text hashes to a fixed vector, so the
  // choice is still deterministic.
  std::size_t class_of_text(std::string_view text) const {
    return *mixture_->nearest_component(oracle_->embed_text(text));
  }

  bool is_background(std::size_t cls) const { return toy_vocabulary().at(cls).pattern >= 0; }

  // Object classes only, in vocabulary order.
  std::vector<std::size_t> object_classes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < toy_vocabulary().size(); ++i)
      if (!is_background(i)) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> background_classes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < toy_vocabulary().size(); ++i)
      if (is_background(i)) out.push_back(i);
    return out;
  }

 private:
  static double texture(int pattern, int y, int x) {
    switch (pattern) {
      case 0: return (x % 2) ? 1.0 : -1.0;
      case 1: return (y % 2) ? 1.0 : -1.0;
      case 2: return ((x + y) % 2) ? 1.0 : -1.0;
      default: return ((x + 2 * y) % 4 < 2) ? 1.0 : -1.0;
    }
  }

  ImageBuffer class_mean(const ToyClassDef& def) const {
    ImageBuffer img(3, opts_.size, opts_.size);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < opts_.size; ++y)
        for (int x = 0; x < opts_.size; ++x)
          img.at(c, y, x) = def.pattern < 0 ? def.rgb[static_cast<std::size_t>(c)]
                                            : 0.5 + opts_.texture_amplitude * def.tint[static_cast<std::size_t>(c)] *
                                                        texture(def.pattern, y, x);
    return img;
  }

  ToyWorldOptions opts_;
  std::unique_ptr<ToyLinearOracle> oracle_;
  std::unique_ptr<ToyGaussianMixtureBackend> mixture_;
};

}  // namespace scenegen
