#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "scenegen/blueprint.hpp"
#include "scenegen/llm_parse.hpp"

using namespace scenegen;

namespace {

// Independent overlap measure: count unit cells on a fine grid.
double grid_iou(const BBox& a, const BBox& b, double cell = 0.25) {
  const double x0 = std::min(a.x, b.x), y0 = std::min(a.y, b.y);
  const double x1 = std::max(a.right(), b.right()), y1 = std::max(a.bottom(), b.bottom());
  long in_a = 0, in_b = 0, both = 0;
  for (double y = y0 + cell / 2; y < y1; y += cell)
    for (double x = x0 + cell / 2; x < x1; x += cell) {
      const bool pa = x >= a.x && x < a.right() && y >= a.y && y < a.bottom();
      const bool pb = x >= b.x && x < b.right() && y >= b.y && y < b.bottom();
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
  const long uni = in_a + in_b - both;
  return uni ? static_cast<double>(both) / uni : 0.0;
}

Layout single(double x) { return {{"a box", {x, 10, 50, 50}}}; }

}  // namespace

TEST(NormalizeName, StripsArticlesCaseAndSpaces) {
  EXPECT_EQ(normalize_name("  The   Cat "), "cat");
  EXPECT_EQ(normalize_name("an Antique tractor"), "antique tractor");
  EXPECT_EQ(normalize_name("vase of vibrant flowers"), "vase of vibrant flowers");
  EXPECT_EQ(normalize_name("a"), "a");
}

TEST(Interpolate, IdenticalBoxesAreAFixedPoint) {
  LayoutSet set{{{{"a cat", {10, 10, 50, 50}}}, {{"a cat", {10, 10, 50, 50}}}, {{"a cat", {10, 10, 50, 50}}}}};
  for (double eta : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    const auto out = interpolate_layouts(set, eta);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].box, (BBox{10, 10, 50, 50}));
  }
}

TEST(Interpolate, MidpointForTwoLayouts) {
  LayoutSet set{{single(0), single(100)}};
  EXPECT_DOUBLE_EQ(interpolate_layouts(set, 0.5)[0].box.x, 50.0);
}

TEST(Interpolate, RecursionHandEvaluated) {
  // l=2: 0.9*10 + 0.1*110 = 20; l=3: 0.9*20 + 0.1*210 = 39
  LayoutSet set{{single(10), single(110), single(210)}};
  EXPECT_EQ(interpolate_layouts(set, 0.1)[0].box.x, 39.0);
}

TEST(Interpolate, EndpointsAndIdentity) {
  LayoutSet set{{single(10), single(110), single(210)}};
  EXPECT_EQ(interpolate_layouts(set, 0.0)[0].box.x, 10.0);
  EXPECT_EQ(interpolate_layouts(set, 1.0)[0].box.x, 210.0);
  LayoutSet one{{single(77)}};
  for (double eta : {0.0, 0.3, 1.0}) EXPECT_EQ(interpolate_layouts(one, eta)[0].box.x, 77.0);
}

TEST(Interpolate, ConvexBoundProperty) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> coord(0, 400), etad(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 5;
    LayoutSet set;
    for (int l = 0; l < k; ++l)
      set.layouts.push_back({{"a dog", {coord(gen), coord(gen), 1 + coord(gen), 1 + coord(gen)}},
                             {"the cat", {coord(gen), coord(gen), 1 + coord(gen), 1 + coord(gen)}}});
    const double eta = etad(gen);
    const auto out = interpolate_layouts(set, eta);
    for (const auto& nb : out) {
      const auto coords = [](const BBox& b) { return std::array<double, 4>{b.x, b.y, b.w, b.h}; };
      const auto got = coords(nb.box);
      for (int c = 0; c < 4; ++c) {
        double lo = 1e300, hi = -1e300;
        for (const auto& lay : set.layouts) {
          const double v = coords(find_box(lay, nb.name)->box)[c];
          lo = std::min(lo, v), hi = std::max(hi, v);
        }
        EXPECT_GE(got[c], lo - 1e-9);
        EXPECT_LE(got[c], hi + 1e-9);
      }
    }
  }
}

TEST(Interpolate, NamesMatchAcrossArticles) {
  LayoutSet set{{{{"a cat", {0, 0, 10, 10}}}, {{"the Cat", {10, 0, 10, 10}}}}};
  EXPECT_DOUBLE_EQ(interpolate_layouts(set, 0.5)[0].box.x, 5.0);
}

TEST(Interpolate, InconsistentNamesRejected) {
  LayoutSet set{{{{"a cat", {0, 0, 10, 10}}}, {{"a dog", {10, 0, 10, 10}}}}};
  try {
    interpolate_layouts(set, 0.5);
    FAIL() << "expected InconsistentNames";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::inconsistent_names);
  }
  EXPECT_THROW(interpolate_layouts(LayoutSet{}, 0.5), Error);
}

TEST(ResolveOverlaps, DisjointBoxesUnchanged) {
  Layout lay{{"a", {0, 0, 100, 100}}, {"b", {200, 200, 100, 100}}};
  const auto res = resolve_overlaps(lay, Canvas{});
  EXPECT_EQ(res.layout, lay);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_EQ(res.residual_max_iou, 0.0);
}

TEST(ResolveOverlaps, IdenticalCenteredBoxesSeparateAlongX) {
  Layout lay{{"a", {206, 206, 100, 100}}, {"b", {206, 206, 100, 100}}};
  const auto res = resolve_overlaps(lay, Canvas{});
  EXPECT_LE(grid_iou(res.layout[0].box, res.layout[1].box), 0.05);
  EXPECT_EQ(res.layout[0].box.y, 206.0);
  EXPECT_EQ(res.layout[1].box.y, 206.0);
  EXPECT_NE(res.layout[0].box.x, res.layout[1].box.x);
}

TEST(ResolveOverlaps, InfeasibleReportsResidual) {
  Layout lay;
  for (int i = 0; i < 6; ++i) lay.push_back({"box" + std::to_string(i), {50.0 * i, 30.0 * i, 300, 300}});
  const auto res = resolve_overlaps(lay, Canvas{});
  EXPECT_GT(res.residual_max_iou, 0.0);
  for (const auto& nb : res.layout) EXPECT_TRUE(inside(nb.box, Canvas{}));
}

TEST(ResolveOverlaps, PreservesPairOrderingAndIsIdempotent) {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> pos(0, 400), size(40, 140);
  for (int trial = 0; trial < 100; ++trial) {
    Layout lay;
    const int n = 3 + trial % 4;
    for (int i = 0; i < n; ++i) lay.push_back({"o" + std::to_string(i), {pos(gen), pos(gen), size(gen), size(gen)}});
    const auto res = resolve_overlaps(lay, Canvas{});
    Layout clamped = lay;
    for (auto& nb : clamped) nb.box = clamp_box(nb.box, Canvas{});
    if (!res.order_preserved) continue;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (clamped[i].box.cx() < clamped[j].box.cx()) {
          EXPECT_LE(res.layout[i].box.cx(), res.layout[j].box.cx() + 1e-9);
        }
        if (clamped[i].box.cy() < clamped[j].box.cy()) {
          EXPECT_LE(res.layout[i].box.cy(), res.layout[j].box.cy() + 1e-9);
        }
      }
    if (res.residual_max_iou <= 0.05) {
      EXPECT_EQ(resolve_overlaps(res.layout, Canvas{}).layout, res.layout);
    }
  }
}

TEST(BoxToMask, FullCanvasIsAllOnes) {
  const auto m = box_to_mask({0, 0, 16, 16}, Canvas{16, 16});
  EXPECT_EQ(m.popcount(), 256u);
}

TEST(BoxToMask, SmallBoxTopLeft) {
  const auto m = box_to_mask({0, 0, 2, 2}, Canvas{4, 4});
  EXPECT_EQ(m.popcount(), 4u);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(1, 1), 1);
  EXPECT_EQ(m.at(2, 2), 0);
}

TEST(BoxToMask, FractionalBoxPopcountMatchesRoundedArea) {
  const BBox b{1.4, 1.4, 2.2, 1.2};
  const auto m = box_to_mask(b, Canvas{8, 8});
  // Independent rasterization: pixel (x,y) is covered when its index lies in
  // [floor(x+0.5), floor(x+0.5) + floor(w+0.5)).
  std::size_t count = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool in = x >= 1 && x < 1 + 2 && y >= 1 && y < 1 + 1;
      count += in;
      EXPECT_EQ(m.at(y, x), in ? 1 : 0);
    }
  EXPECT_EQ(m.popcount(), count);
  EXPECT_EQ(count, 2u);
}

TEST(BoxToMask, DegenerateBoxRejected) {
  try {
    box_to_mask({3, 3, 0.4, 5}, Canvas{8, 8});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_box);
  }
}

TEST(BoxToMask, DisjointBoxesDisjointSupportsProperty) {
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(0, 1);
  const Canvas c{32, 32};
  for (int trial = 0; trial < 300; ++trial) {
    BBox a{u(gen) * 14, u(gen) * 30, 1 + u(gen) * 14, 1 + u(gen) * 2};
    BBox b{a.right() + u(gen) * 3, u(gen) * 30, 1 + u(gen) * 10, 1 + u(gen) * 2};
    a = clamp_box(a, c), b = clamp_box(b, c);
    if (intersection_area(a, b) > 0 || b.right() > 32) continue;
    const auto ma = box_to_mask(a, c), mb = box_to_mask(b, c);
    EXPECT_EQ(ma.popcount(), static_cast<std::size_t>(round_half_up(a.w) * round_half_up(a.h)));
    // Rounding can make touching boxes share a column only if they overlap
    // after rounding; real gaps of >= 1 px never do.
    if (b.x - a.right() >= 1.0) {
      for (std::size_t i = 0; i < ma.data.size(); ++i) EXPECT_FALSE(ma.data[i] && mb.data[i]);
    }
  }
}

TEST(SortForRefinement, AreaDescendingThenYThenX) {
  SceneBlueprint bp;
  bp.objects = {{"small", {0, 0, 10, 10}, "d"},
                {"big-y5", {0, 5, 20, 20}, "d"},
                {"big-y2-x9", {9, 2, 20, 20}, "d"},
                {"big-y2-x1", {1, 2, 20, 20}, "d"}};
  const auto order = sort_for_refinement(bp);
  std::vector<std::string> names;
  for (const auto& o : order) names.push_back(o.name);
  EXPECT_EQ(names, (std::vector<std::string>{"big-y2-x1", "big-y2-x9", "big-y5", "small"}));
}

TEST(SortForRefinement, SingleObject) {
  SceneBlueprint bp;
  bp.objects = {{"only", {1, 2, 3, 4}, "d"}};
  EXPECT_EQ(sort_for_refinement(bp), bp.objects);
}

TEST(SortForRefinement, FarmhouseLayout) {
  // farmhouse 302*245 = 73990, fence 504*112 = 56448,
  // tractor 157*72 = 11304, scarecrow 66*156 = 10296
  SceneBlueprint bp;
  bp.objects = {{"a red farmhouse", {105, 228, 302, 245}, "d"},
                {"a weathered picket fence", {4, 385, 504, 112}, "d"},
                {"an antique tractor", {28, 382, 157, 72}, "d"},
                {"a scarecrow", {368, 271, 66, 156}, "d"}};
  const auto order = sort_for_refinement(bp);
  ASSERT_EQ(order.size(), 4u);
  EXPECT_EQ(order[0].name, "a red farmhouse");
  EXPECT_EQ(order[1].name, "a weathered picket fence");
  EXPECT_EQ(order[2].name, "an antique tractor");
  EXPECT_EQ(order[3].name, "a scarecrow");
}

TEST(BlueprintJson, RoundTripAndSchema) {
  SceneBlueprint bp;
  bp.background_prompt = "A realistic image of a landscape scene";
  bp.objects = {{"a bird", {296, 42, 143, 100}, "A realistic photo of a bird"},
                {"a green car", {21.5, 181.25, 211, 159}, "A realistic photo of a green car"}};
  const auto j = to_json(bp);
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("canvas").at("width"), 512);
  EXPECT_EQ(j.at("objects")[0].at("box"), nlohmann::json::array({296.0, 42.0, 143.0, 100.0}));
  EXPECT_EQ(blueprint_from_json(nlohmann::json::parse(j.dump())), bp);
}

TEST(BlueprintValidate, RejectsDuplicatesAndEmptyFields) {
  SceneBlueprint bp;
  bp.background_prompt = "bg";
  bp.objects = {{"a cat", {0, 0, 10, 10}, "d"}, {"The cat", {20, 0, 10, 10}, "d"}};
  EXPECT_THROW(validate(bp), Error);
  bp.objects = {{"a cat", {0, 0, 10, 10}, ""}};
  EXPECT_THROW(validate(bp), Error);
  bp.objects = {{"a cat", {0, 0, 0.2, 10}, "d"}};
  EXPECT_THROW(validate(bp), Error);
  bp.objects = {{"a cat", {0, 0, 10, 10}, "d"}};
  EXPECT_NO_THROW(validate(bp));
}
