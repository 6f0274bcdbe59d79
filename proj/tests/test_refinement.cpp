#include <gtest/gtest.h>

#include <atomic>
#include <limits>

#include "scenegen/refinement.hpp"

using namespace scenegen;

namespace {

// Paints the whole mask one colour; counts calls.
class PaintCompositor final : public Compositor {
 public:
  explicit PaintCompositor(std::array<double, 3> rgb) : rgb_(rgb) {}
  ImageBuffer compose(const ComposeRequest& req) const override {
    ++calls;
    ImageBuffer out = *req.source;
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          if (req.mask->at(y, x)) out.at(c, y, x) = rgb_[static_cast<std::size_t>(c)];
    return out;
  }
  mutable std::atomic<int> calls{0};

 private:
  std::array<double, 3> rgb_;
};

class ThrowingCompositor final : public Compositor {
 public:
  ImageBuffer compose(const ComposeRequest&) const override { throw NonFiniteStateError(640); }
};

struct Scene {
  ToyWorld world;
  NoiseSchedule sched = NoiseSchedule::linear();
  ToyGenerator gen{world};
  ToyCompositor comp{world, sched};
  SceneBlueprint bp;
  ImageBuffer image;

  // Two objects on a textured background; the apple's box holds the wrong
  // colour, the truck's box holds the right one.
  Scene() {
    bp.background_prompt = "A realistic image of a countryside";
    bp.objects = {{"a red apple", {64, 64, 160, 160}, "A realistic photo of a red apple"},
                  {"a blue truck", {320, 320, 128, 128}, "A realistic photo of a blue truck"}};
    image = gen.generate(bp.background_prompt, 1);
    fill("a red apple", {0.5, 0.85, 0.5});
    fill("a blue truck", {0.5, 0.5, 0.85});
  }

  Mask mask_of(const std::string& name) const {
    for (const auto& o : bp.objects)
      if (o.name == name) return box_to_mask(scale_box(o.box, bp.canvas, world.image_canvas()), world.image_canvas());
    throw std::runtime_error("no object " + name);
  }

  void fill(const std::string& name, std::array<double, 3> rgb) {
    const Mask m = mask_of(name);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          if (m.at(y, x)) image.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
  }

  RefinementBackends backends(const Compositor* c = nullptr) const { return {&world.oracle(), &gen, c ? c : &comp}; }
};

}  // namespace

TEST(ScoreBox, RiggedAndOppositeEmbeddings) {
  Scene s;
  // Register a text whose embedding is exactly the region's embedding.
  ToyWorld w;
  ToyLinearOracle oracle(3, 32, 32, 5);
  const BBox box{64, 64, 160, 160};
  const Mask m = box_to_mask(scale_box(box, Canvas{}, w.image_canvas()), w.image_canvas());
  const Embedding region = oracle.embed_image(s.image, &m);
  oracle.register_text("rigged", region);
  Embedding neg = region;
  for (auto& v : neg) v = -v;
  oracle.register_text("opposite", neg);
  EXPECT_NEAR(score_box(s.image, box, Canvas{}, "rigged", oracle), 1.0, 1e-12);
  EXPECT_NEAR(score_box(s.image, box, Canvas{}, "opposite", oracle), -1.0, 1e-12);
}

TEST(ScoreBox, EqualsCosineOfOracleOutputs) {
  Scene s;
  const BBox box{100, 40, 200, 150};
  const Mask m = box_to_mask(scale_box(box, Canvas{}, s.world.image_canvas()), s.world.image_canvas());
  const Embedding a = s.world.oracle().embed_image(s.image, &m);
  const Embedding b = s.world.oracle().embed_text("a golden retriever");
  const double expected = dot(a, b) / (norm(a) * norm(b));
  EXPECT_NEAR(score_box(s.image, box, Canvas{}, "a golden retriever", s.world.oracle()), expected, 1e-12);
  EXPECT_THROW(score_box(s.image, {10, 10, 2, 2}, Canvas{}, "x", s.world.oracle()), Error);
}

TEST(MakeReference, DeterministicAndValidated) {
  Scene s;
  EXPECT_EQ(make_reference("a red apple", s.gen, 3).data, make_reference("a red apple", s.gen, 3).data);
  EXPECT_THROW(make_reference("", s.gen, 3), Error);
}

TEST(RefineImage, AllPassingIsUnchangedWithZeroRounds) {
  Scene s;
  RefinementPolicy p;
  p.score_threshold = -std::numeric_limits<double>::infinity();
  auto [out, report] = refine_image(s.image, s.bp, p, s.backends(), 1);
  EXPECT_EQ(out.data, s.image.data);
  for (const auto& o : report.objects) {
    EXPECT_EQ(o.rounds, 0);
    EXPECT_TRUE(o.accepted);
  }
}

TEST(RefineImage, InfiniteThresholdSpendsRoundsOnEveryObject) {
  Scene s;
  RefinementPolicy p;
  p.score_threshold = std::numeric_limits<double>::infinity();
  p.max_rounds = 2;
  p.steps = 10;
  auto [out, report] = refine_image(s.image, s.bp, p, s.backends(), 1);
  ASSERT_EQ(report.objects.size(), 2u);
  for (const auto& o : report.objects) {
    EXPECT_EQ(o.rounds, 2);
    EXPECT_FALSE(o.accepted);
    EXPECT_GE(o.final_score, o.initial_score);
  }
}

TEST(RefineImage, OrderFollowsSortForRefinement) {
  Scene s;
  std::swap(s.bp.objects[0], s.bp.objects[1]);
  RefinementPolicy p;
  p.steps = 10;
  auto [out, report] = refine_image(s.image, s.bp, p, s.backends(), 2);
  std::vector<std::string> expected;
  for (const auto& o : sort_for_refinement(s.bp)) expected.push_back(o.name);
  EXPECT_EQ(report.order(), expected);
}

TEST(RefineImage, KeepBestRetainsOriginalWhenRoundIsWorse) {
  Scene s;
  // Paint the already-correct truck box red: strictly worse.
  PaintCompositor worse({0.85, 0.5, 0.5});
  RefinementPolicy p;
  p.score_threshold = 2.0;  // force a round on every object
  p.max_rounds = 1;
  auto [out, report] = refine_image(s.image, s.bp, p, s.backends(&worse), 3);
  const auto& truck = report.objects[1];
  ASSERT_EQ(truck.name, "a blue truck");
  ASSERT_EQ(truck.round_scores.size(), 1u);
  EXPECT_LT(truck.round_scores[0], truck.initial_score);
  EXPECT_EQ(truck.final_score, truck.initial_score);
  const Mask m = s.mask_of("a blue truck");
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (m.at(y, x)) {
        EXPECT_EQ(out.at(2, y, x), s.image.at(2, y, x));
      }

  p.keep_best = false;
  auto [out2, report2] = refine_image(s.image, s.bp, p, s.backends(&worse), 3);
  EXPECT_LT(report2.objects[1].final_score, report2.objects[1].initial_score);
}

TEST(RefineImage, FailingBoxImprovesAcrossSeeds) {
  Scene s;
  RefinementPolicy p;
  double total_gain = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto [out, report] = refine_image(s.image, s.bp, p, s.backends(), seed);
    const auto& apple = report.objects[0];
    ASSERT_EQ(apple.name, "a red apple");
    EXPECT_LT(apple.initial_score, p.score_threshold);
    EXPECT_GE(apple.rounds, 1);
    EXPECT_GE(apple.final_score, apple.initial_score);
    total_gain += apple.final_score - apple.initial_score;
    EXPECT_EQ(report.objects[1].rounds, 0);  // the truck already passes
  }
  EXPECT_GT(total_gain / 20.0, 0.0);
}

TEST(RefineImage, PixelsOutsideRefinedBoxesAreKept) {
  Scene s;
  RefinementPolicy p;
  auto [out, report] = refine_image(s.image, s.bp, p, s.backends(), 9);
  Mask touched(32, 32);
  for (const auto& o : report.objects) {
    if (o.rounds == 0) continue;
    const Mask m = s.mask_of(o.name);
    for (std::size_t i = 0; i < m.data.size(); ++i) touched.data[i] |= m.data[i];
  }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (!touched.at(y, x)) {
          EXPECT_LE(std::abs(out.at(c, y, x) - s.image.at(c, y, x)), 2.0 / 255.0);
        }
}

TEST(RefineImage, NonFiniteRoundIsRecordedAndSkipped) {
  Scene s;
  ThrowingCompositor bad;
  RefinementPolicy p;
  p.max_rounds = 2;
  auto [out, report] = refine_image(s.image, s.bp, p, s.backends(&bad), 1);
  const auto& apple = report.objects[0];
  EXPECT_EQ(apple.rounds, 2);
  EXPECT_EQ(apple.errors.size(), 2u);
  EXPECT_TRUE(apple.round_scores.empty());
  EXPECT_EQ(apple.final_score, apple.initial_score);
  EXPECT_EQ(out.data, s.image.data);
}

TEST(RefineImage, DeterministicGivenSeed) {
  Scene s;
  RefinementPolicy p;
  p.steps = 20;
  auto a = refine_image(s.image, s.bp, p, s.backends(), 4);
  auto b = refine_image(s.image, s.bp, p, s.backends(), 4);
  EXPECT_EQ(a.first.data, b.first.data);
  EXPECT_EQ(to_json(a.second), to_json(b.second));
}

TEST(RefinementPolicy, Validation) {
  RefinementPolicy p;
  p.max_rounds = 0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.steps = 0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.n_inner = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(RefinementReport, JsonRoundTrip) {
  RefinementReport r;
  r.objects.push_back({"a red apple", 0.1, 0.97, 2, true, {0.4, 0.97}, {}});
  r.objects.push_back({"a blue truck", 0.9, 0.9, 0, true, {}, {"non-finite state"}});
  const nlohmann::json j = to_json(r);
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("order"), nlohmann::json({"a red apple", "a blue truck"}));
  const RefinementReport back = refinement_report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
}
