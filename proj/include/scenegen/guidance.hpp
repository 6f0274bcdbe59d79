#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scenegen/error.hpp"
#include "scenegen/geometry.hpp"
#include "scenegen/image.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

using Embedding = std::vector<double>;

struct LossGrad {
  double loss = 0.0;
  ImageBuffer grad;
};

// 1 - cos(a, b), in [0, 2]. Vectors need not be normalized.
inline double cosine_loss(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::shape_mismatch, "cosine_loss: dimension mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(Errc::zero_vector, "cosine_loss: zero-length embedding");
  return 1.0 - std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return 1.0 - cosine_loss(a, b);
}

// d/da [1 - cos(a, b)] = -(b / (|a||b|) - cos(a,b) a / |a|^2)
inline Embedding cosine_loss_grad(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(Errc::zero_vector, "cosine_loss: zero-length embedding");
  const double cs = dot(a, b) / (na * nb);
  Embedding g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = -(b[i] / (na * nb) - cs * a[i] / (na * na));
  return g;
}

// Text/image encoder with an image vector-Jacobian product.
class EmbeddingOracle {
 public:
  virtual ~EmbeddingOracle() = default;

  virtual std::size_t dim() const = 0;
  virtual Embedding embed_image(const ImageBuffer& image, const Mask* mask = nullptr) const = 0;
  virtual Embedding embed_text(std::string_view text) const = 0;
  // cotangent^T * d embed_image(image, mask) / d image
  virtual ImageBuffer image_vjp(const ImageBuffer& image, const Mask* mask, std::span<const double> cotangent) const = 0;

  // Multimodal guidance term and its gradient w.r.t. the image:
  //   cos_loss(E(x.m), T(text)) + lambda * cos_loss(E(x.m), E(ref)).
  // Remote oracles override this to compute it server-side.
  virtual LossGrad clip_loss_and_grad(const ImageBuffer& x, const Mask& mask, std::string_view text,
                                      const ImageBuffer* reference, double lambda) const {
    const Embedding u = embed_image(x, &mask);
    const Embedding target = embed_text(text);
    double loss = cosine_loss(u, target);
    Embedding gu = cosine_loss_grad(u, target);
    if (lambda != 0.0) {
      require(reference != nullptr && reference->size() > 0, Errc::precondition,
              "clip loss: lambda != 0 needs a reference image");
      const Embedding r = embed_image(*reference, nullptr);
      loss += lambda * cosine_loss(u, r);
      const Embedding gr = cosine_loss_grad(u, r);
      for (std::size_t i = 0; i < gu.size(); ++i) gu[i] += lambda * gr[i];
    }
    return {loss, image_vjp(x, &mask, gu)};
  }
};

// Desk-scale differentiable stand-in for CLIP. The image embedding is a
// fixed seeded linear map of the mid-gray-centred pixels inside the mask:
//   e[d] = sum_{c, p in mask} (A[d][c] + jitter * R[d][c][p]) * (x[c][p] - 0.5)
// A carries colour semantics shared by all positions; R is a small
// position-dependent part. The Jacobian is the transpose map, exactly.
class ToyLinearOracle final : public EmbeddingOracle {
 public:
  ToyLinearOracle(int channels, int height, int width, std::uint64_t seed, std::size_t dim = 64, double jitter = 0.2)
      : channels_(channels), height_(height), width_(width), dim_(dim), jitter_(jitter), seed_(seed) {
    Rng rng(derive_seed(seed, "toy-oracle/projection"));
    shared_.resize(dim_ * static_cast<std::size_t>(channels_));
    for (auto& v : shared_) v = rng.normal();
    spatial_.resize(dim_ * static_cast<std::size_t>(channels_) * height_ * width_);
    for (auto& v : spatial_) v = rng.normal();
  }

  std::size_t dim() const override { return dim_; }
  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  static constexpr double kOffset = 0.5;

  Embedding embed_image(const ImageBuffer& image, const Mask* mask = nullptr) const override {
    check_shape(image, mask);
    Embedding e(dim_, 0.0);
    const int plane = height_ * width_;
    for (int c = 0; c < channels_; ++c) {
      double total = 0.0;
      for (int p = 0; p < plane; ++p) {
        if (mask && !mask->data[static_cast<std::size_t>(p)]) continue;
        const double v = image.data[static_cast<std::size_t>(c) * plane + p] - kOffset;
        total += v;
        const double jv = jitter_ * v;
        for (std::size_t d = 0; d < dim_; ++d) e[d] += jv * spatial(d, c, p);
      }
      for (std::size_t d = 0; d < dim_; ++d) e[d] += shared(d, c) * total;
    }
    return e;
  }

  // Embedding of an axis-aligned pixel window; equal to embed_image with the
  // window's mask but touches only the window's pixels.
  Embedding embed_window(const ImageBuffer& image, const PixelRect& r) const {
    Embedding e(dim_, 0.0);
    const int plane = height_ * width_;
    for (int c = 0; c < channels_; ++c) {
      double total = 0.0;
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) {
          const int p = y * width_ + x;
          const double v = image.data[static_cast<std::size_t>(c) * plane + p] - kOffset;
          total += v;
          const double jv = jitter_ * v;
          for (std::size_t d = 0; d < dim_; ++d) e[d] += jv * spatial(d, c, p);
        }
      for (std::size_t d = 0; d < dim_; ++d) e[d] += shared(d, c) * total;
    }
    return e;
  }

  ImageBuffer image_vjp(const ImageBuffer& image, const Mask* mask, std::span<const double> cot) const override {
    check_shape(image, mask);
    require(cot.size() == dim_, Errc::shape_mismatch, "image_vjp: cotangent dimension");
    ImageBuffer g(channels_, height_, width_);
    const int plane = height_ * width_;
    for (int c = 0; c < channels_; ++c) {
      double base = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) base += cot[d] * shared(d, c);
      for (int p = 0; p < plane; ++p) {
        if (mask && !mask->data[static_cast<std::size_t>(p)]) continue;
        double s = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) s += cot[d] * spatial(d, c, p);
        g.data[static_cast<std::size_t>(c) * plane + p] = base + jitter_ * s;
      }
    }
    return g;
  }

  // Direction a uniformly coloured region takes in embedding space.
  Embedding color_direction(std::span<const double> rgb) const {
    require(rgb.size() == static_cast<std::size_t>(channels_), Errc::shape_mismatch, "color_direction: channels");
    Embedding e(dim_, 0.0);
    for (std::size_t d = 0; d < dim_; ++d)
      for (int c = 0; c < channels_; ++c) e[d] += shared(d, c) * (rgb[static_cast<std::size_t>(c)] - kOffset);
    return e;
  }

  // Text lookup: exact normalized text, else the longest registered term
  // found in the text as whole words, else a vector seeded by the text hash.
  void register_text(std::string_view term, Embedding vec) {
    require(vec.size() == dim_, Errc::shape_mismatch, "register_text: dimension");
    text_table_[normalize_text(term)] = std::move(vec);
  }

  Embedding embed_text(std::string_view text) const override {
    const std::string norm_text = normalize_text(text);
    if (auto it = text_table_.find(norm_text); it != text_table_.end()) return it->second;
    const std::string padded = " " + norm_text + " ";
    const Embedding* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [term, vec] : text_table_) {
      if (term.size() > best_len && padded.find(" " + term + " ") != std::string::npos) {
        best = &vec;
        best_len = term.size();
      }
    }
    if (best) return *best;
    Rng rng(derive_seed(seed_, {fnv1a("toy-oracle/text"), fnv1a(norm_text)}));
    Embedding e(dim_);
    for (auto& v : e) v = rng.normal();
    return e;
  }

  static std::string normalize_text(std::string_view text) {
    std::string out;
    bool space = false;
    for (char ch : text) {
      const auto uc = static_cast<unsigned char>(ch);
      if (std::isalnum(uc)) {
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(uc)));
      } else if (ch != '\'') {
        space = true;
      }
    }
    return out;
  }

 private:
  double shared(std::size_t d, int c) const { return shared_[d * channels_ + static_cast<std::size_t>(c)]; }
  double spatial(std::size_t d, int c, int p) const {
    return spatial_[(d * channels_ + static_cast<std::size_t>(c)) * height_ * width_ + static_cast<std::size_t>(p)];
  }

  void check_shape(const ImageBuffer& image, const Mask* mask) const {
    if (image.channels != channels_ || image.height != height_ || image.width != width_)
      throw Error(Errc::shape_mismatch, "toy oracle expects " + std::to_string(channels_) + "x" +
                                            std::to_string(height_) + "x" + std::to_string(width_) + ", got " +
                                            image.shape_str());
    if (mask && (mask->width != width_ || mask->height != height_))
      throw Error(Errc::shape_mismatch, "toy oracle: mask shape");
  }

  int channels_, height_, width_;
  std::size_t dim_;
  double jitter_;
  std::uint64_t seed_;
  std::vector<double> shared_;
  std::vector<double> spatial_;
  std::map<std::string, Embedding> text_table_;
};

// Pluggable perceptual distance between two images plus its gradient in the
// first argument.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual double distance(const ImageBuffer& a, const ImageBuffer& b) const = 0;
  virtual ImageBuffer grad_a(const ImageBuffer& a, const ImageBuffer& b) const = 0;
};

// Cosine distance between responses of seeded random 3x3 filters (zero
// padded, stride 1). Stand-in for a learned patch-similarity network.
class RandomFeaturePerceptual final : public PerceptualMetric {
 public:
  explicit RandomFeaturePerceptual(int channels, std::uint64_t seed = 7, int filters = 8)
      : channels_(channels), filters_(filters), weights_(static_cast<std::size_t>(filters) * channels * 9) {
    Rng rng(derive_seed(seed, "perceptual/filters"));
    for (auto& w : weights_) w = rng.normal() / 3.0;
  }

  double distance(const ImageBuffer& a, const ImageBuffer& b) const override {
    require_same_shape(a, b, "perceptual");
    const auto fa = features(a), fb = features(b);
    const double na = norm(fa), nb = norm(fb);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return 1.0 - dot(fa, fb) / (na * nb);
  }

  ImageBuffer grad_a(const ImageBuffer& a, const ImageBuffer& b) const override {
    require_same_shape(a, b, "perceptual");
    const auto fa = features(a), fb = features(b);
    const double na = norm(fa), nb = norm(fb);
    if (na == 0.0 || nb == 0.0) return ImageBuffer(a.channels, a.height, a.width);
    const auto gf = cosine_loss_grad(fa, fb);
    return features_transpose(gf, a.channels, a.height, a.width);
  }

 private:
  double w(int f, int c, int ky, int kx) const {
    return weights_[((static_cast<std::size_t>(f) * channels_ + c) * 3 + ky) * 3 + kx];
  }

  std::vector<double> features(const ImageBuffer& img) const {
    require(img.channels == channels_, Errc::shape_mismatch, "perceptual: channel count");
    const int H = img.height, W = img.width;
    std::vector<double> out(static_cast<std::size_t>(filters_) * H * W, 0.0);
    for (int f = 0; f < filters_; ++f)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double s = 0.0;
          for (int c = 0; c < channels_; ++c)
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= H) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int xx = x + kx - 1;
                if (xx < 0 || xx >= W) continue;
                s += w(f, c, ky, kx) * img.at(c, yy, xx);
              }
            }
          out[(static_cast<std::size_t>(f) * H + y) * W + x] = s;
        }
    return out;
  }

  ImageBuffer features_transpose(const std::vector<double>& gf, int C, int H, int W) const {
    ImageBuffer g(C, H, W);
    for (int f = 0; f < filters_; ++f)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double v = gf[(static_cast<std::size_t>(f) * H + y) * W + x];
          if (v == 0.0) continue;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= H) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int xx = x + kx - 1;
                if (xx < 0 || xx >= W) continue;
                g.at(c, yy, xx) += w(f, c, ky, kx) * v;
              }
            }
        }
    return g;
  }

  int channels_;
  int filters_;
  std::vector<double> weights_;
};

// Everything one box refinement needs to build its guidance loss.
// `scale` multiplies the gradient fed to the sampler; 0 disables steering.
struct GuidanceSpec {
  std::string description;
  ImageBuffer reference;
  Mask mask;
  double lambda = 1.0;
  double gamma = 100.0;
  ImageBuffer x_init;
  double scale = 1.0;

  void validate() const {
    require(std::isfinite(lambda) && lambda >= 0, Errc::precondition, "guidance: lambda must be finite and >= 0");
    require(std::isfinite(gamma) && gamma >= 0, Errc::precondition, "guidance: gamma must be finite and >= 0");
    require(std::isfinite(scale) && scale >= 0, Errc::precondition, "guidance: scale must be finite and >= 0");
  }
};

namespace detail {

inline ImageBuffer masked_complement(const ImageBuffer& img, const Mask& mask) {
  ImageBuffer out = img;
  const int plane = img.plane();
  for (int c = 0; c < img.channels; ++c)
    for (int p = 0; p < plane; ++p)
      if (mask.data[static_cast<std::size_t>(p)]) out.data[static_cast<std::size_t>(c) * plane + p] = 0.0;
  return out;
}

inline void check_mask(const ImageBuffer& img, const Mask& mask, const char* where) {
  if (mask.width != img.width || mask.height != img.height)
    throw Error(Errc::shape_mismatch, std::string(where) + ": mask does not match image");
}

}  // namespace detail

inline double clip_loss(const ImageBuffer& x0_hat, const GuidanceSpec& spec, const EmbeddingOracle& oracle) {
  detail::check_mask(x0_hat, spec.mask, "clip_loss");
  const Embedding u = oracle.embed_image(x0_hat, &spec.mask);
  double loss = cosine_loss(u, oracle.embed_text(spec.description));
  if (spec.lambda != 0.0) loss += spec.lambda * cosine_loss(u, oracle.embed_image(spec.reference, nullptr));
  return loss;
}

// ||(x0_hat - x_init) . (1-m)||_2 + perceptual(x0_hat . (1-m), x_init . (1-m))
inline double bg_loss(const ImageBuffer& x0_hat, const ImageBuffer& x_init, const Mask& mask,
                      const PerceptualMetric* perceptual) {
  require_same_shape(x0_hat, x_init, "bg_loss");
  detail::check_mask(x0_hat, mask, "bg_loss");
  const ImageBuffer a = detail::masked_complement(x0_hat, mask);
  const ImageBuffer b = detail::masked_complement(x_init, mask);
  double loss = l2_distance(a, b);
  if (perceptual) loss += perceptual->distance(a, b);
  return loss;
}

// L = L_clip + gamma * L_bg and dL/dx0_hat, assembled analytically. With
// gamma == 0 the background image is never read.
inline LossGrad guidance_loss_and_grad(const ImageBuffer& x0_hat, const GuidanceSpec& spec,
                                       const EmbeddingOracle& oracle, const PerceptualMetric* perceptual = nullptr) {
  spec.validate();
  detail::check_mask(x0_hat, spec.mask, "guidance");
  LossGrad out = oracle.clip_loss_and_grad(x0_hat, spec.mask, spec.description,
                                           spec.lambda != 0.0 ? &spec.reference : nullptr, spec.lambda);
  require_same_shape(out.grad, x0_hat, "guidance gradient");
  if (spec.gamma != 0.0) {
    require_same_shape(x0_hat, spec.x_init, "guidance background");
    const ImageBuffer a = detail::masked_complement(x0_hat, spec.mask);
    const ImageBuffer b = detail::masked_complement(spec.x_init, spec.mask);
    const double l2 = l2_distance(a, b);
    double bg = l2;
    if (l2 > 0.0)
      for (std::size_t i = 0; i < a.size(); ++i) out.grad.data[i] += spec.gamma * (a.data[i] - b.data[i]) / l2;
    if (perceptual) {
      bg += perceptual->distance(a, b);
      const ImageBuffer gp = detail::masked_complement(perceptual->grad_a(a, b), spec.mask);
      for (std::size_t i = 0; i < gp.size(); ++i) out.grad.data[i] += spec.gamma * gp.data[i];
    }
    out.loss += spec.gamma * bg;
  }
  if (!std::isfinite(out.loss) || !out.grad.all_finite())
    throw Error(Errc::non_finite_gradient, "guidance loss or gradient is not finite");
  return out;
}

}  // namespace scenegen
