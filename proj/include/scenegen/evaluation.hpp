#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenegen/backends.hpp"
#include "scenegen/blueprint.hpp"

namespace scenegen {

struct ObjectPresence {
  std::string name;
  bool present = false;
  double confidence = 0.0;
};

struct PromptRecall {
  std::string id;
  double recall = 0.0;
  std::vector<ObjectPresence> objects;
};

struct ParResult {
  std::vector<PromptRecall> per_prompt;
  double overall_par = 0.0;
  std::size_t total_objects = 0;
  std::size_t total_present = 0;
};

struct EvalItem {
  std::string id;
  const ImageBuffer* image = nullptr;
  std::vector<std::string> labels;
};

inline std::vector<std::string> object_labels(const SceneBlueprint& bp) {
  std::vector<std::string> out;
  for (const auto& o : bp.objects) out.push_back(o.name);
  return out;
}

// Prompt Adherence Recall: presence is image-global (the detector may fire
// anywhere), and every object across the batch weighs the same.
inline ParResult par_score(const std::vector<EvalItem>& items, const DetectorOracle& detector) {
  if (items.empty()) throw Error(Errc::empty_batch, "par_score: no images");
  ParResult res;
  for (const auto& item : items) {
    require(item.image != nullptr, Errc::precondition, "par_score: item '" + item.id + "' has no image");
    if (item.labels.empty()) throw Error(Errc::empty_batch, "par_score: item '" + item.id + "' has no objects");
    PromptRecall pr;
    pr.id = item.id;
    std::size_t hits = 0;
    for (const auto& label : item.labels) {
      const Detection d = detector.detect(*item.image, label);
      pr.objects.push_back({label, d.present, d.confidence});
      hits += d.present ? 1 : 0;
    }
    pr.recall = static_cast<double>(hits) / static_cast<double>(item.labels.size());
    res.total_objects += item.labels.size();
    res.total_present += hits;
    res.per_prompt.push_back(std::move(pr));
  }
  res.overall_par = static_cast<double>(res.total_present) / static_cast<double>(res.total_objects);
  return res;
}

inline nlohmann::json to_json(const ParResult& r) {
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& p : r.per_prompt) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : p.objects) objs.push_back({{"name", o.name}, {"present", o.present}, {"confidence", o.confidence}});
    prompts.push_back({{"id", p.id}, {"recall", p.recall}, {"objects", std::move(objs)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"overall_par", r.overall_par},
          {"total_objects", r.total_objects},
          {"total_present", r.total_present},
          {"per_prompt", std::move(prompts)}};
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace detail

// One row per (prompt, object).
inline std::string to_csv(const ParResult& r) {
  std::ostringstream os;
  os << "prompt_id,prompt_recall,object,present,confidence\n";
  for (const auto& p : r.per_prompt)
    for (const auto& o : p.objects)
      os << detail::csv_field(p.id) << ',' << p.recall << ',' << detail::csv_field(o.name) << ','
         << (o.present ? 1 : 0) << ',' << o.confidence << '\n';
  return os.str();
}

inline std::unique_ptr<DetectorOracle> toy_detector(const ToyWorld& world, double similarity_floor) {
  return std::make_unique<ToyDetector>(world, similarity_floor);
}

struct SignTestResult {
  int positive = 0;
  int negative = 0;
  int ties = 0;
  double p_value = 1.0;  // one-sided, H1: positive differences dominate
};

// Exact one-sided sign test on paired differences; zeros are dropped.
inline SignTestResult sign_test(const std::vector<double>& diffs) {
  SignTestResult r;
  for (double d : diffs) {
    if (d > 0)
      ++r.positive;
    else if (d < 0)
      ++r.negative;
    else
      ++r.ties;
  }
  const int n = r.positive + r.negative;
  if (n == 0) return r;
  // P(X >= positive) for X ~ Binomial(n, 1/2), summed in log space.
  double p = 0.0;
  for (int k = r.positive; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  r.p_value = std::min(1.0, p);
  return r;
}

inline nlohmann::json to_json(const SignTestResult& s) {
  return {{"positive", s.positive}, {"negative", s.negative}, {"ties", s.ties}, {"p_value", s.p_value}};
}

}  // namespace scenegen
