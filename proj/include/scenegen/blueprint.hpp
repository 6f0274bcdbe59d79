#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "scenegen/error.hpp"
#include "scenegen/geometry.hpp"

namespace scenegen {

// Lowercase, drop a leading article, collapse whitespace. Layout and
// description replies from the LLM disagree on articles, so every name
// comparison goes through this.
inline std::string normalize_name(std::string_view raw) {
  std::string words;
  std::string cur;
  std::vector<std::string> tokens;
  for (char ch : raw) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  std::size_t first = 0;
  if (tokens.size() > 1 && (tokens[0] == "a" || tokens[0] == "an" || tokens[0] == "the")) first = 1;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    if (!words.empty()) words.push_back(' ');
    words += tokens[i];
  }
  return words;
}

struct NamedBox {
  std::string name;
  BBox box;
  friend bool operator==(const NamedBox&, const NamedBox&) = default;
};

// One proposal: object name -> box, in reply order.
using Layout = std::vector<NamedBox>;

inline const NamedBox* find_box(const Layout& layout, std::string_view name) {
  const std::string key = normalize_name(name);
  for (const auto& nb : layout)
    if (normalize_name(nb.name) == key) return &nb;
  return nullptr;
}

struct LayoutSet {
  std::vector<Layout> layouts;
  std::size_t k() const noexcept { return layouts.size(); }
};

struct ObjectSpec {
  std::string name;
  BBox box;
  std::string description;
  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct SceneBlueprint {
  Canvas canvas;
  std::vector<ObjectSpec> objects;
  std::string background_prompt;
  friend bool operator==(const SceneBlueprint&, const SceneBlueprint&) = default;
};

// Recursive convex blend across the k proposals, applied per coordinate:
//   z(1) = z1,  z(l) = (1 - eta) * z(l-1) + eta * zl.
// Names and order follow the first layout.
inline Layout interpolate_layouts(const LayoutSet& set, double eta) {
  require(set.k() >= 1, Errc::precondition, "interpolate_layouts: empty layout set");
  require(eta >= 0.0 && eta <= 1.0, Errc::precondition, "interpolate_layouts: eta outside [0,1]");
  const Layout& base = set.layouts.front();
  for (std::size_t l = 1; l < set.k(); ++l) {
    const Layout& other = set.layouts[l];
    bool same = other.size() == base.size();
    for (std::size_t i = 0; same && i < base.size(); ++i) same = find_box(other, base[i].name) != nullptr;
    if (!same)
      throw Error(Errc::inconsistent_names, "layout " + std::to_string(l + 1) + " disagrees with layout 1 on object names");
  }
  Layout out = base;
  for (auto& nb : out) {
    for (std::size_t l = 1; l < set.k(); ++l) {
      const BBox& z = find_box(set.layouts[l], nb.name)->box;
      nb.box.x = (1.0 - eta) * nb.box.x + eta * z.x;
      nb.box.y = (1.0 - eta) * nb.box.y + eta * z.y;
      nb.box.w = (1.0 - eta) * nb.box.w + eta * z.w;
      nb.box.h = (1.0 - eta) * nb.box.h + eta * z.h;
    }
  }
  return out;
}

struct OverlapOptions {
  int max_iters = 100;
  double iou_eps = 0.05;
  int restarts = 8;  // axis assignments tried per ordering mode
};

struct OverlapResult {
  Layout layout;
  double residual_max_iou = 0.0;
  int iterations = 0;
  bool order_preserved = true;
};

namespace detail {

inline double max_pair_iou(const Layout& boxes, std::size_t* bi = nullptr, std::size_t* bj = nullptr) {
  double best = 0.0;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const double v = iou(boxes[i].box, boxes[j].box);
      if (v > best) {
        best = v;
        if (bi) *bi = i;
        if (bj) *bj = j;
      }
    }
  return best;
}

inline double axis_overlap(const BBox& a, const BBox& b, bool x_axis) {
  return x_axis ? std::min(a.right(), b.right()) - std::max(a.x, b.x)
                : std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
}

// pos[b] - pos[a] >= gap along one axis.
struct AxisConstraint {
  std::size_t a, b;
  double gap;
};

// Alternating projection onto the constraint half-planes and the canvas
// interval. Each projection is the nearest-point move (half to each box),
// so the result stays close to the input. Returns the largest remaining
// violation.
inline double project_axis(std::vector<double>& pos, const std::vector<double>& hi,
                           const std::vector<AxisConstraint>& cons, int sweeps) {
  double worst = 0.0;
  for (int s = 0; s < sweeps; ++s) {
    worst = 0.0;
    for (const auto& c : cons) {
      const double v = c.gap - (pos[c.b] - pos[c.a]);
      if (v <= 1e-12) continue;
      worst = std::max(worst, v);
      pos[c.a] = std::clamp(pos[c.a] - 0.5 * v, 0.0, hi[c.a]);
      pos[c.b] = std::clamp(pos[c.b] + 0.5 * v, 0.0, hi[c.b]);
    }
    if (worst <= 1e-9) break;
  }
  return worst;
}

}  // namespace detail

namespace detail {

// One separation pass. Each overlapping pair is given an axis (least
// penetration when seed == 0, a hashed choice otherwise) and must be
// separated along it far enough to reach half of iou_eps. With `ordered`,
// every pair's center ordering from `origin` is also a constraint. That
// gives one convex system per axis, solved by alternating projection. A
// pair whose system cannot be satisfied switches axis; after two failures
// its constraint is dropped.
inline Layout separate(Layout boxes, const Layout& origin, const Canvas& canvas, const OverlapOptions& opts,
                       bool ordered, std::uint64_t seed, int& iterations) {
  const std::size_t n = boxes.size();
  const double target = 0.5 * opts.iou_eps;
  constexpr int kSweeps = 2000;

  // 0 = unassigned, 1 = x, 2 = y, 3 = dropped.
  std::vector<int> axis(n * n, 0), tries(n * n, 0);
  const auto center = [](const BBox& b, bool x) { return x ? b.cx() : b.cy(); };
  const auto pick = [seed](std::size_t pair, const BBox& a, const BBox& b) {
    if (seed == 0) return axis_overlap(a, b, true) <= axis_overlap(a, b, false) ? 1 : 2;
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + pair;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return ((z ^ (z >> 31)) & 1u) ? 1 : 2;
  };

  for (iterations = 0; iterations < opts.max_iters; ++iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (axis[i * n + j] != 0 || iou(boxes[i].box, boxes[j].box) <= opts.iou_eps) continue;
        axis[i * n + j] = pick(i * n + j, boxes[i].box, boxes[j].box);
        changed = true;
      }
    if (!changed && max_pair_iou(boxes) <= opts.iou_eps) break;

    std::size_t flip = n * n;
    double flip_violation = 0.0;
    for (const bool x : {true, false}) {
      const auto size = [x](const BBox& b) { return x ? b.w : b.h; };
      std::vector<double> pos(n), hi(n);
      for (std::size_t i = 0; i < n; ++i) {
        pos[i] = x ? boxes[i].box.x : boxes[i].box.y;
        hi[i] = x ? canvas.width - boxes[i].box.w : canvas.height - boxes[i].box.h;
      }
      std::vector<AxisConstraint> cons;
      std::vector<std::size_t> pair_of;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const BBox& bi = boxes[i].box;
          const BBox& bj = boxes[j].box;
          const double oi = center(origin[i].box, x), oj = center(origin[j].box, x);
          if (ordered && oi < oj) {
            cons.push_back({i, j, 0.5 * (size(bi) - size(bj))});
            pair_of.push_back(n * n);
          }
          if (axis[std::min(i, j) * n + std::max(i, j)] != (x ? 1 : 2)) continue;
          const double ci = center(bi, x), cj = center(bj, x);
          const bool i_lower = oi != oj ? oi < oj : (ci != cj ? ci < cj : i < j);
          if (!i_lower) continue;
          // Overlap along this axis that keeps IoU <= target whatever the
          // overlap on the other axis.
          const double other = std::min(x ? bi.h : bi.w, x ? bj.h : bj.w);
          const double allowed = target * (bi.area() + bj.area()) / ((1.0 + target) * other);
          const double overlap = std::max(0.0, std::min(allowed, std::min(size(bi), size(bj))) - 1e-9);
          cons.push_back({i, j, size(bi) - overlap});
          pair_of.push_back(std::min(i, j) * n + std::max(i, j));
        }
      project_axis(pos, hi, cons, kSweeps);
      for (std::size_t i = 0; i < n; ++i) (x ? boxes[i].box.x : boxes[i].box.y) = pos[i];
      for (std::size_t c = 0; c < cons.size(); ++c) {
        const double v = cons[c].gap - (pos[cons[c].b] - pos[cons[c].a]);
        if (pair_of[c] < n * n && v > 1e-6 && v > flip_violation) {
          flip_violation = v;
          flip = pair_of[c];
        }
      }
    }
    if (flip < n * n) {
      axis[flip] = ++tries[flip] >= 2 ? 3 : (axis[flip] == 1 ? 2 : 1);
      changed = true;
    }
    if (!changed) break;
  }
  for (auto& nb : boxes) nb.box = clamp_box(nb.box, canvas);
  return boxes;
}

}  // namespace detail

// Best-effort separation. Passes that keep every pair's left/right and
// above/below center ordering are tried first, with a few alternative axis
// assignments; if none reaches iou_eps the ordering is given up and the
// same search runs unconstrained. Infeasible layouts are not an error;
// residual_max_iou reports what remains and order_preserved says whether
// the ordering held.
inline OverlapResult resolve_overlaps(const Layout& layout, const Canvas& canvas, OverlapOptions opts = {}) {
  Layout clamped = layout;
  for (auto& nb : clamped) nb.box = clamp_box(nb.box, canvas);

  OverlapResult best;
  best.layout = clamped;
  best.residual_max_iou = detail::max_pair_iou(clamped);
  if (best.residual_max_iou <= opts.iou_eps) return best;

  bool have = false;
  for (const bool ordered : {true, false})
    for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(opts.restarts); ++seed) {
      OverlapResult r;
      r.layout = detail::separate(clamped, clamped, canvas, opts, ordered, seed, r.iterations);
      r.residual_max_iou = detail::max_pair_iou(r.layout);
      r.order_preserved = ordered;
      if (!have || r.residual_max_iou < best.residual_max_iou) {
        best = std::move(r);
        have = true;
      }
      if (best.residual_max_iou <= opts.iou_eps) return best;
    }
  return best;
}

// Background-to-foreground refinement order: larger boxes first, ties by
// ascending y then ascending x. Stable.
inline std::vector<ObjectSpec> sort_for_refinement(const SceneBlueprint& bp) {
  std::vector<ObjectSpec> out = bp.objects;
  std::stable_sort(out.begin(), out.end(), [](const ObjectSpec& a, const ObjectSpec& b) {
    if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    return a.box.x < b.box.x;
  });
  return out;
}

inline void validate(const SceneBlueprint& bp) {
  require(bp.canvas.width > 0 && bp.canvas.height > 0, Errc::validation_error, "canvas must be positive");
  require(!bp.objects.empty(), Errc::validation_error, "blueprint has no objects");
  std::unordered_set<std::string> seen;
  for (const auto& o : bp.objects) {
    require(!o.name.empty(), Errc::validation_error, "object with empty name");
    require(!o.description.empty(), Errc::validation_error, "object '" + o.name + "' has empty description");
    require(seen.insert(normalize_name(o.name)).second, Errc::validation_error,
            "duplicate object name '" + o.name + "'");
    require(std::isfinite(o.box.x) && std::isfinite(o.box.y) && std::isfinite(o.box.w) && std::isfinite(o.box.h),
            Errc::validation_error, "object '" + o.name + "' has non-finite box");
    require(inside(o.box, bp.canvas, 1e-6), Errc::validation_error,
            "object '" + o.name + "' box outside canvas or empty");
    require(round_half_up(o.box.w) > 0 && round_half_up(o.box.h) > 0, Errc::validation_error,
            "object '" + o.name + "' box rounds to zero area");
  }
}

// ---- JSON ----------------------------------------------------------------

inline constexpr int kSchemaVersion = 1;

inline nlohmann::json box_to_json(const BBox& b) { return nlohmann::json::array({b.x, b.y, b.w, b.h}); }

inline BBox box_from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 4, Errc::validation_error, "box must be [x,y,w,h]");
  for (const auto& v : j) require(v.is_number(), Errc::validation_error, "box entries must be numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline nlohmann::json to_json(const SceneBlueprint& bp) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : bp.objects)
    objs.push_back({{"name", o.name}, {"box", box_to_json(o.box)}, {"description", o.description}});
  return {{"schema_version", kSchemaVersion},
          {"canvas", {{"width", bp.canvas.width}, {"height", bp.canvas.height}}},
          {"background_prompt", bp.background_prompt},
          {"objects", objs}};
}

inline SceneBlueprint blueprint_from_json(const nlohmann::json& j) {
  try {
    SceneBlueprint bp;
    if (j.contains("canvas")) {
      bp.canvas.width = j.at("canvas").at("width").get<int>();
      bp.canvas.height = j.at("canvas").at("height").get<int>();
    }
    bp.background_prompt = j.at("background_prompt").get<std::string>();
    for (const auto& o : j.at("objects"))
      bp.objects.push_back({o.at("name").get<std::string>(), box_from_json(o.at("box")),
                            o.at("description").get<std::string>()});
    return bp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::validation_error, std::string("blueprint JSON: ") + e.what());
  }
}

}  // namespace scenegen
