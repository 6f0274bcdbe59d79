#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scenegen/backends.hpp"
#include "scenegen/blueprint.hpp"
#include "scenegen/log.hpp"

namespace scenegen {

struct RefinementPolicy {
  double score_threshold = 0.5;  // tau; 0.28 is the usual choice with real CLIP
  int max_rounds = 3;
  bool keep_best = true;
  int n_inner = 1;
  int steps = 50;

  void validate() const {
    require(!std::isnan(score_threshold), Errc::config_error, "policy: score_threshold is NaN");
    require(max_rounds >= 1, Errc::config_error, "policy: max_rounds must be >= 1");
    require(n_inner >= 1, Errc::config_error, "policy: n_inner must be >= 1");
    require(steps >= 1, Errc::config_error, "policy: steps must be >= 1");
  }
};

struct ObjectReport {
  std::string name;
  double initial_score = 0.0;
  double final_score = 0.0;
  int rounds = 0;
  bool accepted = false;
  std::vector<double> round_scores;  // score of each completed round
  std::vector<std::string> errors;   // rounds aborted by the sampler
};

struct RefinementReport {
  std::vector<ObjectReport> objects;  // in refinement order

  std::vector<std::string> order() const {
    std::vector<std::string> out;
    for (const auto& o : objects) out.push_back(o.name);
    return out;
  }
};

inline nlohmann::json to_json(const RefinementReport& r) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : r.objects) {
    nlohmann::json j{{"name", o.name},          {"initial_score", o.initial_score}, {"final_score", o.final_score},
                     {"rounds", o.rounds},      {"accepted", o.accepted},           {"round_scores", o.round_scores}};
    if (!o.errors.empty()) j["errors"] = o.errors;
    objs.push_back(std::move(j));
  }
  return {{"schema_version", kSchemaVersion}, {"objects", std::move(objs)}, {"order", r.order()}};
}

inline RefinementReport refinement_report_from_json(const nlohmann::json& j) {
  RefinementReport r;
  for (const auto& o : j.at("objects")) {
    ObjectReport obj;
    obj.name = o.at("name").get<std::string>();
    obj.initial_score = o.at("initial_score").get<double>();
    obj.final_score = o.at("final_score").get<double>();
    obj.rounds = o.at("rounds").get<int>();
    obj.accepted = o.at("accepted").get<bool>();
    obj.round_scores = o.value("round_scores", std::vector<double>{});
    obj.errors = o.value("errors", std::vector<std::string>{});
    r.objects.push_back(std::move(obj));
  }
  return r;
}

// Cosine similarity between the box region's image embedding and the
// description's text embedding. `box` is in layout-canvas coordinates and
// is mapped onto the image grid first.
inline double score_box(const ImageBuffer& image, const BBox& box, const Canvas& canvas, std::string_view description,
                        const EmbeddingOracle& oracle) {
  const Canvas grid{image.width, image.height};
  const Mask mask = box_to_mask(scale_box(box, canvas, grid), grid);
  return cosine_similarity(oracle.embed_image(image, &mask), oracle.embed_text(description));
}

inline ImageBuffer make_reference(std::string_view description, const ImageGenerator& generator, std::uint64_t seed) {
  require(!description.empty(), Errc::precondition, "make_reference: empty description");
  return generator.generate(description, seed);
}

struct RefinementBackends {
  const EmbeddingOracle* oracle = nullptr;
  const ImageGenerator* generator = nullptr;
  const Compositor* compositor = nullptr;
};

// Iterative refinement. Objects are visited larger-first; an object whose
// score is below the threshold gets up to max_rounds attempts, each from
// the image as it stood before the object, with a fresh reference
// prototype. With keep_best the highest-scoring image (the starting one
// included) is kept; otherwise the last candidate is.
inline std::pair<ImageBuffer, RefinementReport> refine_image(const ImageBuffer& x_initial, const SceneBlueprint& bp,
                                                             const RefinementPolicy& policy,
                                                             const RefinementBackends& be, std::uint64_t seed) {
  policy.validate();
  require(be.oracle && be.generator && be.compositor, Errc::precondition, "refine_image: missing backend");
  const Canvas grid{x_initial.width, x_initial.height};
  ImageBuffer current = x_initial;
  RefinementReport report;

  const auto ordered = sort_for_refinement(bp);
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    const ObjectSpec& obj = ordered[k];
    ObjectReport rep;
    rep.name = obj.name;
    const Mask mask = box_to_mask(scale_box(obj.box, bp.canvas, grid), grid);
    const auto score = [&](const ImageBuffer& img) {
      return cosine_similarity(be.oracle->embed_image(img, &mask), be.oracle->embed_text(obj.description));
    };
    rep.initial_score = rep.final_score = score(current);
    if (rep.initial_score >= policy.score_threshold) {
      rep.accepted = true;
      report.objects.push_back(std::move(rep));
      continue;
    }

    const std::uint64_t obj_seed = derive_seed(seed, {fnv1a("refine/object"), fnv1a(obj.name)});
    ImageBuffer kept = current;
    for (int round = 0; round < policy.max_rounds; ++round) {
      ++rep.rounds;
      const auto r = static_cast<std::uint64_t>(round);
      const ImageBuffer ref = make_reference(obj.description, *be.generator, derive_seed(obj_seed, "reference", r));
      ComposeRequest req;
      req.source = &current;
      req.mask = &mask;
      req.description = obj.description;
      req.reference = &ref;
      req.steps = policy.steps;
      req.n_inner = policy.n_inner;
      req.seed = derive_seed(obj_seed, "compose", r);
      ImageBuffer candidate;
      try {
        candidate = be.compositor->compose(req);
      } catch (const NonFiniteStateError& e) {
        log_warn("refine: '" + obj.name + "' round " + std::to_string(round + 1) + " aborted: " + e.what());
        rep.errors.push_back(e.what());
        continue;
      }
      const double s = score(candidate);
      rep.round_scores.push_back(s);
      if (!policy.keep_best || s > rep.final_score) {
        kept = std::move(candidate);
        rep.final_score = s;
      }
      if (s >= policy.score_threshold) {
        rep.accepted = true;
        break;
      }
    }
    current = std::move(kept);
    report.objects.push_back(std::move(rep));
  }
  return {std::move(current), std::move(report)};
}

}  // namespace scenegen
