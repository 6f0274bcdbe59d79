#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scenegen/backends.hpp"
#include "scenegen/blueprint.hpp"
#include "scenegen/bridge_client.hpp"
#include "scenegen/evaluation.hpp"
#include "scenegen/llm_client.hpp"
#include "scenegen/log.hpp"
#include "scenegen/png_io.hpp"
#include "scenegen/refinement.hpp"
#include "scenegen/svg.hpp"
#include "scenegen/toy_world.hpp"

namespace scenegen {

struct NoiseCorrection {
  bool enabled = false;
  double strength = 0.3;  // fraction of the global-phase trajectory re-run
};

struct GuidanceConfig {
  double lambda = 1.0;
  double gamma = 100.0;
  double scale = 20.0;        // gradient scale during refinement
  double global_scale = 0.0;  // gradient scale while stamping the initial image
};

struct ToyConfig {
  std::uint64_t world_seed = 0;
  double sigma = 0.005;
  double text_strength = 3.0;
  double reference_strength = 30.0;
  double detector_floor = 0.9;
};

struct RunConfig {
  int k = 3;
  double eta = 0.5;
  int global_steps = 20;
  int refine_steps = 50;
  std::uint64_t seed = 0;
  std::string backend = "toy";  // toy | http
  std::string output_dir = "run";
  int image_size = 32;
  LlmConfig llm;
  GuidanceConfig guidance;
  RefinementPolicy policy;  // policy.steps is taken from refine_steps
  NoiseCorrection noise_correct;
  OverlapOptions overlap;
  ToyConfig toy;
  BridgeConfig bridge;

  // Defaults that depend on the backend: the real bridge works at 512 px
  // with the usual CLIP-score threshold.
  static RunConfig defaults_for(std::string_view backend) {
    RunConfig c;
    c.backend = std::string(backend);
    if (backend == "http") {
      c.image_size = 512;
      c.policy.score_threshold = 0.28;
    }
    return c;
  }

  RefinementPolicy effective_policy() const {
    RefinementPolicy p = policy;
    p.steps = refine_steps;
    return p;
  }

  void validate() const {
    const auto cfg = [](bool ok, const std::string& what) { require(ok, Errc::config_error, what); };
    cfg(k >= 1, "k must be >= 1");
    cfg(eta >= 0.0 && eta <= 1.0, "eta must be in [0,1]");
    cfg(global_steps >= 1 && global_steps <= 1000, "global_steps must be in [1,1000]");
    cfg(refine_steps >= 1 && refine_steps <= 1000, "refine_steps must be in [1,1000]");
    cfg(backend == "toy" || backend == "http", "backend must be 'toy' or 'http'");
    cfg(image_size >= 8, "image_size must be >= 8");
    cfg(noise_correct.strength > 0.0 && noise_correct.strength < 1.0, "noise_correct.strength must be in (0,1)");
    cfg(!(noise_correct.enabled && backend == "http"), "noise correction needs the local denoiser (toy backend)");
    for (double v : {guidance.lambda, guidance.gamma, guidance.scale, guidance.global_scale})
      cfg(std::isfinite(v) && v >= 0.0, "guidance values must be finite and >= 0");
    cfg(overlap.max_iters >= 1 && overlap.restarts >= 1 && overlap.iou_eps >= 0.0, "overlap options out of range");
    cfg(toy.sigma >= 0.0, "toy.sigma must be >= 0");
    cfg(std::isfinite(toy.text_strength) && std::isfinite(toy.reference_strength), "toy strengths must be finite");
    cfg(toy.detector_floor > -1.0 && toy.detector_floor < 1.0, "toy.detector_floor must be in (-1,1)");
    llm.validate();
    effective_policy().validate();
    bridge.validate();
  }

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

// ---- JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const RunConfig& c) {
  return {
      {"schema_version", kSchemaVersion},
      {"k", c.k},
      {"eta", c.eta},
      {"global_steps", c.global_steps},
      {"refine_steps", c.refine_steps},
      {"seed", c.seed},
      {"backend", c.backend},
      {"output_dir", c.output_dir},
      {"image_size", c.image_size},
      {"llm",
       {{"endpoint_url", c.llm.endpoint_url},
        {"api_key_env", c.llm.api_key_env},
        {"model_name", c.llm.model_name},
        {"temperature", c.llm.temperature},
        {"description_temperature", c.llm.description_temperature},
        {"timeout_s", c.llm.timeout_s},
        {"max_retries", c.llm.max_retries}}},
      {"guidance",
       {{"lambda", c.guidance.lambda},
        {"gamma", c.guidance.gamma},
        {"scale", c.guidance.scale},
        {"global_scale", c.guidance.global_scale}}},
      {"policy",
       {{"score_threshold", c.policy.score_threshold},
        {"max_rounds", c.policy.max_rounds},
        {"keep_best", c.policy.keep_best},
        {"n_inner", c.policy.n_inner}}},
      {"noise_correct", {{"enabled", c.noise_correct.enabled}, {"strength", c.noise_correct.strength}}},
      {"overlap",
       {{"max_iters", c.overlap.max_iters}, {"iou_eps", c.overlap.iou_eps}, {"restarts", c.overlap.restarts}}},
      {"toy",
       {{"world_seed", c.toy.world_seed},
        {"sigma", c.toy.sigma},
        {"text_strength", c.toy.text_strength},
        {"reference_strength", c.toy.reference_strength},
        {"detector_floor", c.toy.detector_floor}}},
      {"bridge",
       {{"url", c.bridge.url},
        {"timeout_s", c.bridge.timeout_s},
        {"max_retries", c.bridge.max_retries},
        {"detector_threshold", c.bridge.detector_threshold}}},
  };
}

namespace detail {

// Copies j[key] into out when present; unknown keys are rejected so that a
// typo in a config file is an error rather than a silent default.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), Errc::config_error, where_ + " must be a JSON object");
  }

  template <typename T>
  JsonReader& get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::config_error, where_ + "." + key + " has the wrong type");
    }
    return *this;
  }

  JsonReader section(const char* key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return JsonReader(j_.contains(key) ? j_.at(key) : empty, where_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error(Errc::config_error, "unknown config key " + where_ + "." + k);
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Keys absent from `j` keep their values in `base`.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base) {
  RunConfig c = std::move(base);
  detail::JsonReader r(j, "config");
  int schema = kSchemaVersion;
  r.get("schema_version", schema);
  require(schema == kSchemaVersion, Errc::config_error, "unsupported schema_version " + std::to_string(schema));
  r.get("k", c.k).get("eta", c.eta).get("global_steps", c.global_steps).get("refine_steps", c.refine_steps);
  r.get("seed", c.seed).get("backend", c.backend).get("output_dir", c.output_dir).get("image_size", c.image_size);
  {
    auto s = r.section("llm");
    s.get("endpoint_url", c.llm.endpoint_url).get("api_key_env", c.llm.api_key_env).get("model_name", c.llm.model_name);
    s.get("temperature", c.llm.temperature).get("description_temperature", c.llm.description_temperature);
    s.get("timeout_s", c.llm.timeout_s).get("max_retries", c.llm.max_retries).finish();
  }
  {
    auto s = r.section("guidance");
    s.get("lambda", c.guidance.lambda).get("gamma", c.guidance.gamma).get("scale", c.guidance.scale);
    s.get("global_scale", c.guidance.global_scale).finish();
  }
  {
    auto s = r.section("policy");
    s.get("score_threshold", c.policy.score_threshold).get("max_rounds", c.policy.max_rounds);
    s.get("keep_best", c.policy.keep_best).get("n_inner", c.policy.n_inner).finish();
  }
  r.section("noise_correct").get("enabled", c.noise_correct.enabled).get("strength", c.noise_correct.strength).finish();
  r.section("overlap")
      .get("max_iters", c.overlap.max_iters)
      .get("iou_eps", c.overlap.iou_eps)
      .get("restarts", c.overlap.restarts)
      .finish();
  {
    auto s = r.section("toy");
    s.get("world_seed", c.toy.world_seed).get("sigma", c.toy.sigma).get("text_strength", c.toy.text_strength);
    s.get("reference_strength", c.toy.reference_strength).get("detector_floor", c.toy.detector_floor).finish();
  }
  {
    auto s = r.section("bridge");
    s.get("url", c.bridge.url).get("timeout_s", c.bridge.timeout_s).get("max_retries", c.bridge.max_retries);
    s.get("detector_threshold", c.bridge.detector_threshold).finish();
  }
  r.finish();
  return c;
}

// Backend-dependent defaults come from the "backend" key when present.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  std::string backend = "toy";
  if (j.is_object() && j.contains("backend") && j["backend"].is_string()) backend = j["backend"].get<std::string>();
  return run_config_from_json(j, RunConfig::defaults_for(backend));
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return to_json(a) == to_json(b); }

// ---- backends ------------------------------------------------------------

// Everything a run needs from the model side, owned in one place. The toy
// flavour is a ToyWorld plus its analytic sampler; the http flavour talks to
// the model bridge and has no local denoiser.
class Backends {
 public:
  explicit Backends(const RunConfig& cfg) : sched_(NoiseSchedule::linear()) {
    cfg.validate();
    if (cfg.backend == "toy") {
      ToyWorldOptions wo;
      wo.size = cfg.image_size;
      wo.seed = cfg.toy.world_seed;
      wo.sigma = cfg.toy.sigma;
      world_ = std::make_unique<ToyWorld>(wo);
      ToyComposeOptions co;
      co.text_strength = cfg.toy.text_strength;
      co.reference_strength = cfg.toy.reference_strength;
      co.text_guidance = cfg.guidance.global_scale;
      co.reference_guidance = cfg.guidance.scale;
      co.lambda = cfg.guidance.lambda;
      co.gamma = cfg.guidance.gamma;
      oracle_ = &world_->oracle();
      generator_ = std::make_unique<ToyGenerator>(*world_);
      compositor_ = std::make_unique<ToyCompositor>(*world_, sched_, co);
      detector_ = std::make_unique<ToyDetector>(*world_, cfg.toy.detector_floor);
      denoiser_ = &world_->mixture();
    } else {
      client_ = std::make_unique<BridgeClient>(cfg.bridge);
      bridge_oracle_ = std::make_unique<BridgeOracle>(*client_);
      oracle_ = bridge_oracle_.get();
      generator_ = std::make_unique<BridgeGenerator>(*client_, cfg.global_steps);
      compositor_ = std::make_unique<BridgeCompositor>(*client_, cfg.guidance.lambda, cfg.guidance.gamma,
                                                       cfg.guidance.scale);
      detector_ = std::make_unique<BridgeDetector>(*client_);
    }
  }

  Backends(const Backends&) = delete;
  Backends& operator=(const Backends&) = delete;

  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const ToyWorld* world() const noexcept { return world_.get(); }
  const EmbeddingOracle& oracle() const noexcept { return *oracle_; }
  const ImageGenerator& generator() const noexcept { return *generator_; }
  const Compositor& compositor() const noexcept { return *compositor_; }
  const DetectorOracle& detector() const noexcept { return *detector_; }
  const DenoiserBackend* denoiser() const noexcept { return denoiser_; }
  RefinementBackends refinement() const { return {oracle_, generator_.get(), compositor_.get()}; }

 private:
  NoiseSchedule sched_;
  std::unique_ptr<ToyWorld> world_;
  std::unique_ptr<BridgeClient> client_;
  std::unique_ptr<BridgeOracle> bridge_oracle_;
  const EmbeddingOracle* oracle_ = nullptr;
  std::unique_ptr<ImageGenerator> generator_;
  std::unique_ptr<Compositor> compositor_;
  std::unique_ptr<DetectorOracle> detector_;
  const DenoiserBackend* denoiser_ = nullptr;
};

// ---- stages --------------------------------------------------------------

// k layout queries, parse, interpolate, clamp and separate, then one
// description query. Objects come out in refinement order.
inline SceneBlueprint build_blueprint(std::string_view caption, const RunConfig& cfg, ChatBackend& llm) {
  cfg.validate();
  const auto replies = request_layouts(caption, cfg.k, cfg.llm, llm);
  LayoutSet set;
  std::string background;
  for (const auto& r : replies) {
    LayoutReply parsed = parse_layout_response(r);
    if (set.layouts.empty()) background = parsed.background_prompt;
    set.layouts.push_back(std::move(parsed.layout));
  }
  SceneBlueprint bp;
  bp.background_prompt = background;
  const Layout blended = interpolate_layouts(set, cfg.eta);
  const OverlapResult sep = resolve_overlaps(blended, bp.canvas, cfg.overlap);
  if (sep.residual_max_iou > cfg.overlap.iou_eps)
    log_warn("blueprint: boxes still overlap after separation (max IoU " + std::to_string(sep.residual_max_iou) + ")");
  if (!sep.order_preserved) log_info("blueprint: box ordering relaxed to reach separation");

  std::vector<std::string> names;
  for (const auto& nb : sep.layout) names.push_back(nb.name);
  const auto descriptions = parse_description_response(request_descriptions(caption, names, cfg.llm, llm), names);
  for (const auto& nb : sep.layout) bp.objects.push_back({nb.name, nb.box, descriptions.at(nb.name)});
  bp.objects = sort_for_refinement(bp);
  validate(bp);
  return bp;
}

// Image-to-image pass: noise x to the strided step round(strength * steps)
// and run DDIM back down with the unconditioned denoiser.
inline ImageBuffer noise_correct(const ImageBuffer& x, double strength, const DenoiserBackend& denoiser,
                                 const NoiseSchedule& sched, int steps, std::uint64_t seed) {
  require(strength > 0.0 && strength < 1.0, Errc::precondition, "noise_correct: strength must be in (0,1)");
  const std::vector<int> ts = sched.strided(steps);
  const long n = std::clamp<long>(round_half_up(strength * static_cast<double>(ts.size())), 1,
                                  static_cast<long>(ts.size()));
  const auto top = static_cast<std::size_t>(n - 1);
  Rng rng(seed);
  const ImageBuffer x_t = forward_noise(x, ts[top], gaussian_like(x, rng), sched);
  return ddim_sample(x_t, denoiser, sched, ts, {}, top);
}

// Global phase: a background image from the background prompt, then one
// short masked composition per object (larger boxes first) conditioned on
// its description. Quantized to 8 bits, as it would be on disk.
inline ImageBuffer generate_initial(const SceneBlueprint& bp, const Backends& be, const RunConfig& cfg) {
  validate(bp);
  const Canvas grid{cfg.image_size, cfg.image_size};
  ImageBuffer x = be.generator().generate(bp.background_prompt, derive_seed(cfg.seed, "generate/background"));
  require(x.height == grid.height && x.width == grid.width, Errc::shape_mismatch,
          "background image is " + x.shape_str() + ", expected " + std::to_string(grid.width) + " px");
  for (const auto& obj : sort_for_refinement(bp)) {
    const Mask mask = box_to_mask(scale_box(obj.box, bp.canvas, grid), grid);
    ComposeRequest req;
    req.source = &x;
    req.mask = &mask;
    req.description = obj.description;
    req.steps = cfg.global_steps;
    req.n_inner = cfg.policy.n_inner;
    req.seed = derive_seed(cfg.seed, {fnv1a("generate/object"), fnv1a(obj.name)});
    x = be.compositor().compose(req);
  }
  if (cfg.noise_correct.enabled) {
    require(be.denoiser() != nullptr, Errc::config_error, "noise correction needs a local denoiser");
    x = noise_correct(x, cfg.noise_correct.strength, *be.denoiser(), be.schedule(), cfg.global_steps,
                      derive_seed(cfg.seed, "noise-correct"));
  }
  return quantize_u8(x);
}

inline std::pair<ImageBuffer, RefinementReport> refine(const ImageBuffer& x_initial, const SceneBlueprint& bp,
                                                       const Backends& be, const RunConfig& cfg) {
  auto [img, report] = refine_image(x_initial, bp, cfg.effective_policy(), be.refinement(),
                                    derive_seed(cfg.seed, "refine"));
  return {quantize_u8(img), std::move(report)};
}

struct RunEval {
  ParResult initial;
  ParResult refined;
};

inline RunEval evaluate_run(const SceneBlueprint& bp, const ImageBuffer& initial, const ImageBuffer& refined,
                            const DetectorOracle& detector) {
  const auto labels = object_labels(bp);
  return {par_score({{"initial", &initial, labels}}, detector), par_score({{"refined", &refined, labels}}, detector)};
}

// ---- run directories -----------------------------------------------------

namespace artifacts {
inline constexpr const char* kBlueprint = "blueprint.json";
inline constexpr const char* kLayout = "layout.svg";
inline constexpr const char* kInitial = "initial.png";
inline constexpr const char* kRefined = "refined.png";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kConfigEcho = "config-echo.json";
}  // namespace artifacts

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  const auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::io_error, p.string() + " is not valid JSON");
  return j;
}

inline void prepare_dir(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
  write_json(dir / artifacts::kConfigEcho, to_json(cfg));
}

inline SceneBlueprint stage_blueprint(std::string_view caption, const RunConfig& cfg, ChatBackend& llm,
                                      const std::filesystem::path& dir) {
  SceneBlueprint bp = build_blueprint(caption, cfg, llm);
  prepare_dir(dir, cfg);
  write_json(dir / artifacts::kBlueprint, to_json(bp));
  write_file(dir / artifacts::kLayout, render_layout(bp));
  return bp;
}

inline SceneBlueprint load_blueprint(const std::filesystem::path& dir) {
  SceneBlueprint bp = blueprint_from_json(read_json(dir / artifacts::kBlueprint));
  validate(bp);
  return bp;
}

inline ImageBuffer stage_generate(const RunConfig& cfg, const Backends& be, const std::filesystem::path& dir) {
  const SceneBlueprint bp = load_blueprint(dir);
  prepare_dir(dir, cfg);
  ImageBuffer x = generate_initial(bp, be, cfg);
  write_png(dir / artifacts::kInitial, x);
  return x;
}

inline RefinementReport stage_refine(const RunConfig& cfg, const Backends& be, const std::filesystem::path& dir) {
  const SceneBlueprint bp = load_blueprint(dir);
  const ImageBuffer initial = read_png(dir / artifacts::kInitial);
  prepare_dir(dir, cfg);
  auto [img, report] = refine(initial, bp, be, cfg);
  write_png(dir / artifacts::kRefined, img);
  write_json(dir / artifacts::kReport, {{"schema_version", kSchemaVersion}, {"refinement", to_json(report)}});
  return report;
}

// Scores initial.png and refined.png with the detector and records both in
// report.json next to the refinement record.
inline RunEval stage_eval(const RunConfig& cfg, const Backends& be, const std::filesystem::path& dir) {
  const SceneBlueprint bp = load_blueprint(dir);
  const RunEval ev =
      evaluate_run(bp, read_png(dir / artifacts::kInitial), read_png(dir / artifacts::kRefined), be.detector());
  prepare_dir(dir, cfg);
  nlohmann::json report = read_json(dir / artifacts::kReport);
  report["eval"] = {{"initial", to_json(ev.initial)}, {"refined", to_json(ev.refined)}};
  write_json(dir / artifacts::kReport, report);
  return ev;
}

struct RunSummary {
  SceneBlueprint blueprint;
  RefinementReport report;
  RunEval eval;
};

inline RunSummary run_pipeline(std::string_view caption, const RunConfig& cfg, ChatBackend& llm,
                               const std::filesystem::path& dir) {
  cfg.validate();
  const Backends be(cfg);
  RunSummary s;
  s.blueprint = stage_blueprint(caption, cfg, llm, dir);
  stage_generate(cfg, be, dir);
  s.report = stage_refine(cfg, be, dir);
  s.eval = stage_eval(cfg, be, dir);
  return s;
}

// ---- synthetic toy suite -------------------------------------------------

// One synthetic prompt: a caption plus the scripted LLM replies (k layout
// replies, then the description reply) that a mock backend plays back.
struct SuitePrompt {
  std::string id;
  std::string caption;
  std::vector<std::string> script;
};

namespace detail {
inline std::string with_article(const std::string& noun) {
  const bool vowel = std::string_view("aeiou").find(noun.front()) != std::string_view::npos;
  return (vowel ? "an " : "a ") + noun;
}
}  // namespace detail

// Synthetic benchmark over the toy vocabulary: each prompt has one
// background and 2-4 objects of distinct colour classes. The k layouts are
// jittered copies of one base layout.
inline std::vector<SuitePrompt> toy_suite(std::size_t n = 50, std::uint64_t seed = 0, int k = 3) {
  require(k >= 1, Errc::precondition, "toy_suite: k must be >= 1");
  const auto& vocab = toy_vocabulary();
  std::vector<std::size_t> objects, backgrounds;
  for (std::size_t i = 0; i < vocab.size(); ++i) (vocab[i].pattern < 0 ? objects : backgrounds).push_back(i);

  std::vector<SuitePrompt> out;
  for (std::size_t p = 0; p < n; ++p) {
    Rng rng(derive_seed(seed, "toy-suite", p));
    const auto pick = [&](const std::vector<std::string>& v) {
      return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
    };
    const std::string scene = pick(vocab[backgrounds[static_cast<std::size_t>(
                                             rng.uniform_int(0, static_cast<int>(backgrounds.size()) - 1))]]
                                       .terms);
    std::vector<std::size_t> classes = objects;
    for (std::size_t i = classes.size(); i > 1; --i)
      std::swap(classes[i - 1], classes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    classes.resize(static_cast<std::size_t>(rng.uniform_int(2, 4)));

    Layout base;
    for (std::size_t c : classes) {
      const double w = rng.uniform(96, 208), h = rng.uniform(96, 208);
      base.push_back({detail::with_article(pick(vocab[c].terms)),
                      {std::round(rng.uniform(0, 512 - w)), std::round(rng.uniform(0, 512 - h)), std::round(w),
                       std::round(h)}});
    }
    SuitePrompt sp;
    sp.id = "toy-" + std::to_string(p + 1);
    sp.caption = "A realistic scene of " + detail::with_article(scene) + " with ";
    for (std::size_t i = 0; i < base.size(); ++i)
      sp.caption += (i == 0 ? "" : i + 1 == base.size() ? " and " : ", ") + base[i].name;
    sp.caption += ".";
    const std::string background = "A realistic image of " + detail::with_article(scene);
    for (int l = 0; l < k; ++l) {
      Layout jittered = base;
      if (l > 0)
        for (auto& nb : jittered) {
          nb.box.x = std::clamp(nb.box.x + std::round(rng.uniform(-16, 16)), 0.0, 512 - nb.box.w);
          nb.box.y = std::clamp(nb.box.y + std::round(rng.uniform(-16, 16)), 0.0, 512 - nb.box.h);
        }
      sp.script.push_back(render_layout_text(jittered, background));
    }
    nlohmann::json desc = nlohmann::json::object();
    for (const auto& nb : base) desc[nb.name] = "A realistic photo of " + nb.name + ".";
    sp.script.push_back(desc.dump());
    out.push_back(std::move(sp));
  }
  return out;
}

struct SuiteResult {
  ParResult unrefined;
  ParResult refined;
  SignTestResult sign;             // per-prompt recall, refined minus unrefined
  bool scores_monotone = true;     // every object: final_score >= initial_score
  std::size_t objects_refined = 0;  // objects that used at least one round
};

// Runs every prompt through blueprint, initial generation and refinement
// (prompts in parallel; each is independent and seeded) and scores both
// images with the detector.
inline SuiteResult evaluate_suite(const std::vector<SuitePrompt>& suite, const RunConfig& cfg, const Backends& be,
                                  unsigned workers = 0) {
  require(!suite.empty(), Errc::empty_batch, "evaluate_suite: empty suite");
  struct One {
    SceneBlueprint bp;
    ImageBuffer initial, refined;
    RefinementReport report;
  };
  std::vector<One> runs(suite.size());
  const auto work = [&](std::size_t i) {
    MockLlm llm(suite[i].script);
    RunConfig c = cfg;
    c.seed = derive_seed(cfg.seed, suite[i].id);
    runs[i].bp = build_blueprint(suite[i].caption, c, llm);
    runs[i].initial = generate_initial(runs[i].bp, be, c);
    std::tie(runs[i].refined, runs[i].report) = refine(runs[i].initial, runs[i].bp, be, c);
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(suite.size()));
  std::vector<std::future<void>> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < suite.size(); i += workers) work(i);
    }));
  for (auto& f : pool) f.get();

  SuiteResult res;
  std::vector<EvalItem> before, after;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto labels = object_labels(runs[i].bp);
    before.push_back({suite[i].id, &runs[i].initial, labels});
    after.push_back({suite[i].id, &runs[i].refined, labels});
    for (const auto& o : runs[i].report.objects) {
      res.scores_monotone &= o.final_score >= o.initial_score;
      res.objects_refined += o.rounds > 0 ? 1 : 0;
    }
  }
  res.unrefined = par_score(before, be.detector());
  res.refined = par_score(after, be.detector());
  std::vector<double> diffs;
  for (std::size_t i = 0; i < suite.size(); ++i)
    diffs.push_back(res.refined.per_prompt[i].recall - res.unrefined.per_prompt[i].recall);
  res.sign = sign_test(diffs);
  return res;
}

inline nlohmann::json to_json(const SuiteResult& r) {
  return {{"schema_version", kSchemaVersion},
          {"synthetic", true},
          {"unrefined", to_json(r.unrefined)},
          {"refined", to_json(r.refined)},
          {"sign_test", to_json(r.sign)},
          {"scores_monotone", r.scores_monotone},
          {"objects_refined", r.objects_refined}};
}

}  // namespace scenegen
