#include <gtest/gtest.h>

#include <chrono>

#include "scenegen/guidance.hpp"

using namespace scenegen;

namespace {

ImageBuffer random_image(int c, int h, int w, Rng& rng) {
  ImageBuffer img(c, h, w);
  for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
  return img;
}

// Central difference of f along coordinate i.
template <class F>
double central_diff(F&& f, ImageBuffer x, std::size_t i, double h = 1e-5) {
  const double v = x.data[i];
  x.data[i] = v + h;
  const double up = f(x);
  x.data[i] = v - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct Fixture {
  Rng rng{21};
  ToyLinearOracle oracle{3, 8, 8, 5};
  RandomFeaturePerceptual perceptual{3};
  GuidanceSpec spec;

  Fixture() {
    spec.description = "a red apple";
    spec.reference = random_image(3, 8, 8, rng);
    spec.mask = box_to_mask({2, 1, 4, 5}, Canvas{8, 8});
    spec.x_init = random_image(3, 8, 8, rng);
    spec.lambda = 0.7;
    spec.gamma = 3.0;
  }
};

}  // namespace

TEST(CosineLoss, KnownValuesAndZeroVector) {
  const std::vector<double> a{1, 0}, b{0, 2}, c{-3, 0};
  EXPECT_NEAR(cosine_loss(a, a), 0.0, 1e-15);
  EXPECT_NEAR(cosine_loss(a, b), 1.0, 1e-15);
  EXPECT_NEAR(cosine_loss(a, c), 2.0, 1e-15);
  const std::vector<double> z{0, 0};
  try {
    cosine_loss(a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::zero_vector);
  }
}

TEST(CosineLoss, GradientMatchesFiniteDifference) {
  Rng rng(22);
  std::vector<double> a(7), b(7);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  const auto g = cosine_loss_grad(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto up = a, down = a;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_LE(rel_err(g[i], (cosine_loss(up, b) - cosine_loss(down, b)) / 2e-6), 1e-6);
  }
}

TEST(ToyOracle, WindowEmbeddingEqualsMaskedEmbedding) {
  Rng rng(23);
  ToyLinearOracle oracle(3, 8, 8, 1);
  const auto img = random_image(3, 8, 8, rng);
  const BBox box{1, 2, 5, 3};
  const auto mask = box_to_mask(box, Canvas{8, 8});
  const auto a = oracle.embed_image(img, &mask);
  const auto b = oracle.embed_window(img, rasterize(box, Canvas{8, 8}));
  for (std::size_t d = 0; d < a.size(); ++d) EXPECT_NEAR(a[d], b[d], 1e-12);
}

TEST(ToyOracle, UniformColourPointsAlongColourDirection) {
  ToyLinearOracle oracle(3, 8, 8, 2, 64, 0.0);
  ImageBuffer img(3, 8, 8);
  const std::vector<double> rgb{0.85, 0.5, 0.5};
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 64; ++p) img.data[static_cast<std::size_t>(c) * 64 + p] = rgb[c];
  EXPECT_NEAR(cosine_similarity(oracle.embed_image(img), oracle.color_direction(rgb)), 1.0, 1e-12);
}

TEST(ToyOracle, TextLookupPrefersExactThenLongestTerm) {
  ToyLinearOracle oracle(3, 4, 4, 3, 4);
  oracle.register_text("apple", {1, 0, 0, 0});
  oracle.register_text("red apple", {0, 1, 0, 0});
  oracle.register_text("A realistic photo of a red apple.", {0, 0, 1, 0});
  EXPECT_EQ(oracle.embed_text("a realistic photo of a RED apple"), (Embedding{0, 0, 1, 0}));
  EXPECT_EQ(oracle.embed_text("one shiny red apple on a table"), (Embedding{0, 1, 0, 0}));
  EXPECT_EQ(oracle.embed_text("apples"), oracle.embed_text("apples"));
  EXPECT_NE(oracle.embed_text("apples"), (Embedding{1, 0, 0, 0}));
  EXPECT_NE(oracle.embed_text("pineapple"), (Embedding{1, 0, 0, 0}));
}

TEST(Perceptual, IdenticalImagesHaveZeroDistance) {
  Rng rng(24);
  RandomFeaturePerceptual p(3);
  const auto a = random_image(3, 6, 6, rng);
  EXPECT_NEAR(p.distance(a, a), 0.0, 1e-12);
  EXPECT_GT(p.distance(a, random_image(3, 6, 6, rng)), 0.0);
}

TEST(Perceptual, GradientMatchesFiniteDifference) {
  Rng rng(25);
  RandomFeaturePerceptual p(3);
  const auto a = random_image(3, 5, 5, rng), b = random_image(3, 5, 5, rng);
  const auto g = p.grad_a(a, b);
  for (std::size_t i = 0; i < a.size(); i += 7)
    EXPECT_LE(rel_err(g.data[i], central_diff([&](const ImageBuffer& x) { return p.distance(x, b); }, a, i)), 1e-5);
}

TEST(GuidanceLoss, GradientMatchesCentralDifferences) {
  Fixture f;
  const auto x = random_image(3, 8, 8, f.rng);
  const auto start = std::chrono::steady_clock::now();
  const auto lg = guidance_loss_and_grad(x, f.spec, f.oracle, &f.perceptual);
  const auto loss = [&](const ImageBuffer& y) { return guidance_loss_and_grad(y, f.spec, f.oracle, &f.perceptual).loss; };
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const auto i = static_cast<std::size_t>(f.rng.uniform_int(0, static_cast<int>(x.size()) - 1));
    worst = std::max(worst, rel_err(lg.grad.data[i], central_diff(loss, x, i)));
  }
  EXPECT_LE(worst, 1e-4);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(GuidanceLoss, LossIsSumOfParts) {
  Fixture f;
  const auto x = random_image(3, 8, 8, f.rng);
  const double expected =
      clip_loss(x, f.spec, f.oracle) + f.spec.gamma * bg_loss(x, f.spec.x_init, f.spec.mask, &f.perceptual);
  EXPECT_NEAR(guidance_loss_and_grad(x, f.spec, f.oracle, &f.perceptual).loss, expected, 1e-12);
}

TEST(GuidanceLoss, ClipGradientVanishesOutsideMask) {
  Fixture f;
  f.spec.gamma = 0.0;
  const auto x = random_image(3, 8, 8, f.rng);
  const auto g = guidance_loss_and_grad(x, f.spec, f.oracle).grad;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 64; ++p)
      if (!f.spec.mask.data[static_cast<std::size_t>(p)]) {
        EXPECT_EQ(g.data[static_cast<std::size_t>(c) * 64 + p], 0.0);
      }
}

TEST(GuidanceLoss, ZeroWeightsSkipTheirInputs) {
  Fixture f;
  f.spec.lambda = 0.0;
  f.spec.gamma = 0.0;
  f.spec.reference = ImageBuffer();
  f.spec.x_init = ImageBuffer();
  const auto x = random_image(3, 8, 8, f.rng);
  const auto lg = guidance_loss_and_grad(x, f.spec, f.oracle);
  EXPECT_NEAR(lg.loss, cosine_loss(f.oracle.embed_image(x, &f.spec.mask), f.oracle.embed_text(f.spec.description)),
              1e-12);
}

TEST(GuidanceLoss, BackgroundTermIsZeroWhenOutsideMatches) {
  Fixture f;
  const auto x = f.spec.x_init;
  EXPECT_NEAR(bg_loss(x, f.spec.x_init, f.spec.mask, &f.perceptual), 0.0, 1e-12);
}

TEST(GuidanceLoss, RejectsBadInputs) {
  Fixture f;
  const auto x = random_image(3, 8, 8, f.rng);
  f.spec.mask = full_mask(7, 8);
  try {
    guidance_loss_and_grad(x, f.spec, f.oracle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
  Fixture g;
  g.spec.lambda = -1;
  EXPECT_THROW(guidance_loss_and_grad(x, g.spec, g.oracle), Error);
  // A mask that covers nothing leaves a zero image embedding.
  Fixture h;
  h.spec.mask = Mask(8, 8, 0);
  try {
    guidance_loss_and_grad(x, h.spec, h.oracle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::zero_vector);
  }
}
