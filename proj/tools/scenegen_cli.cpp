// scenegen: long-prompt to scene image, one stage per subcommand.
//
//   scenegen run --prompt-file caption.txt --mock-script replies.json --out run1
//   scenegen blueprint|generate|refine|eval --out run1
//   scenegen eval --toy-suite 50
//   scenegen render --blueprint run1/blueprint.json --svg layout.svg
//
// Exit codes: 0 success, 1 stage failure, 2 configuration error. Failures
// print {"schema_version":1,"error":{"code","message","stage"}} on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "scenegen/pipeline.hpp"

namespace fs = std::filesystem;
using namespace scenegen;
using nlohmann::json;

namespace {

constexpr int kExitStage = 1;
constexpr int kExitConfig = 2;

// Flags shared by every subcommand; only those given override the config.
struct Overrides {
  std::string config_file;
  int k = 0, steps = 0, refine_steps = 0, image_size = 0;
  double eta = 0, nc_strength = 0;
  std::uint64_t seed = 0;
  std::string backend, out = "run", bridge_url, llm_url, llm_model;
  bool noise_correct = false, no_noise_correct = false;
  const CLI::App* active = nullptr;  // the subcommand that was parsed

  bool has(const std::string& name) const { return active->get_option("--" + name)->count() > 0; }
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "RunConfig JSON (unknown keys are rejected)");
  app->add_option("--k", o.k, "layouts requested from the LLM");
  app->add_option("--eta", o.eta, "layout interpolation weight in [0,1]");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--steps", o.steps, "global-phase diffusion steps");
  app->add_option("--refine-steps", o.refine_steps, "refinement diffusion steps");
  app->add_option("--backend", o.backend, "toy | http");
  app->add_option("--out", o.out, "run directory")->capture_default_str();
  app->add_option("--image-size", o.image_size, "working image size in pixels");
  app->add_option("--bridge-url", o.bridge_url, "model bridge base URL");
  app->add_option("--llm-url", o.llm_url, "chat-completion endpoint");
  app->add_option("--llm-model", o.llm_model, "chat model name");
  app->add_flag("--noise-correct", o.noise_correct, "enable the noise-correction pass");
  app->add_flag("--no-noise-correct", o.no_noise_correct);
  app->add_option("--noise-strength", o.nc_strength, "noise-correction strength in (0,1)");
}

json load_json_file(const fs::path& p) {
  const json j = json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::config_error, p.string() + " is not valid JSON");
  return j;
}

// Precedence: backend defaults < config echo already in the run directory
// < --config < flags.
RunConfig resolve_config(const Overrides& o, bool use_echo) {
  json file;
  if (o.has("config")) {
    file = load_json_file(o.config_file);
  } else if (use_echo && fs::exists(fs::path(o.out) / artifacts::kConfigEcho)) {
    file = load_json_file(fs::path(o.out) / artifacts::kConfigEcho);
  }
  std::string backend = "toy";
  if (file.is_object() && file.contains("backend") && file["backend"].is_string()) backend = file["backend"];
  if (o.has("backend")) backend = o.backend;
  RunConfig c = RunConfig::defaults_for(backend);
  if (file.is_object()) c = run_config_from_json(file, c);
  c.backend = backend;
  if (o.has("k")) c.k = o.k;
  if (o.has("eta")) c.eta = o.eta;
  if (o.has("seed")) c.seed = o.seed;
  if (o.has("steps")) c.global_steps = o.steps;
  if (o.has("refine-steps")) c.refine_steps = o.refine_steps;
  if (o.has("image-size")) c.image_size = o.image_size;
  if (o.has("bridge-url")) c.bridge.url = o.bridge_url;
  if (o.has("llm-url")) c.llm.endpoint_url = o.llm_url;
  if (o.has("llm-model")) c.llm.model_name = o.llm_model;
  if (o.noise_correct) c.noise_correct.enabled = true;
  if (o.no_noise_correct) c.noise_correct.enabled = false;
  if (o.has("noise-strength")) c.noise_correct.strength = o.nc_strength;
  c.output_dir = o.out;
  c.validate();
  return c;
}

// A mock script is a JSON array of reply strings or {"replies": [...]}.
std::vector<std::string> load_script(const fs::path& p) {
  json j = load_json_file(p);
  if (j.is_object() && j.contains("replies")) j = j["replies"];
  try {
    auto replies = j.get<std::vector<std::string>>();
    if (replies.empty()) throw Error(Errc::config_error, "mock script is empty");
    return replies;
  } catch (const json::exception&) {
    throw Error(Errc::config_error, p.string() + ": mock script must be an array of strings");
  }
}

std::unique_ptr<ChatBackend> make_llm(const std::string& script, const RunConfig& cfg) {
  if (!script.empty()) return std::make_unique<MockLlm>(load_script(script));
  return std::make_unique<HttpChatBackend>(cfg.llm);
}

std::string load_caption(const std::string& prompt, const std::string& prompt_file) {
  if (!prompt.empty() && !prompt_file.empty())
    throw Error(Errc::config_error, "give either --prompt or --prompt-file, not both");
  std::string text = prompt_file.empty() ? prompt : read_file(prompt_file);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  if (text.empty()) throw Error(Errc::config_error, "caption is empty (use --prompt or --prompt-file)");
  return text;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

json par_line(const RunEval& ev) {
  return {{"initial_par", ev.initial.overall_par}, {"refined_par", ev.refined.overall_par}};
}

int fail(Errc code, const std::string& message, const std::string& stage) {
  const json err = {{"schema_version", kSchemaVersion},
                    {"error", {{"code", std::string(errc_name(code))}, {"message", message}, {"stage", stage}}}};
  std::cerr << err.dump() << '\n';
  return code == Errc::config_error ? kExitConfig : kExitStage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene generation from long prompts: blueprint, global generation, iterative refinement, evaluation"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "log progress");
  app.add_flag("-q,--quiet", quiet, "log errors only");

  Overrides o;
  std::string prompt, prompt_file, script;
  const auto add_caption = [&](CLI::App* sub) {
    sub->add_option("--prompt", prompt, "caption text");
    sub->add_option("--prompt-file", prompt_file, "file holding the caption");
    sub->add_option("--mock-script", script, "scripted LLM replies (JSON); without it the HTTP LLM is used");
  };

  auto* run = app.add_subcommand("run", "all stages into one run directory");
  add_common(run, o);
  add_caption(run);

  auto* blueprint = app.add_subcommand("blueprint", "query the LLM and write blueprint.json and layout.svg");
  add_common(blueprint, o);
  add_caption(blueprint);

  auto* generate = app.add_subcommand("generate", "global phase: blueprint.json -> initial.png");
  add_common(generate, o);

  auto* refine_cmd = app.add_subcommand("refine", "iterative refinement: initial.png -> refined.png, report.json");
  add_common(refine_cmd, o);

  std::size_t suite_n = 0;
  std::uint64_t suite_seed = 0;
  unsigned workers = 0;
  std::string csv_path;
  auto* eval = app.add_subcommand("eval", "score a run directory, or the synthetic toy suite");
  add_common(eval, o);
  eval->add_option("--toy-suite", suite_n, "evaluate N synthetic prompts instead of a run directory");
  eval->add_option("--suite-seed", suite_seed, "seed for the synthetic prompts");
  eval->add_option("--workers", workers, "parallel prompts (0: one per core)");
  eval->add_option("--csv", csv_path, "also write per-object results of the refined images as CSV");

  std::string bp_path, svg_path;
  auto* render = app.add_subcommand("render", "draw a blueprint as SVG");
  render->add_option("--blueprint", bp_path, "blueprint.json")->required();
  render->add_option("--svg", svg_path, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(Errc::config_error, e.what(), "cli");
  }
  for (const auto* sub : {run, blueprint, generate, refine_cmd, eval})
    if (sub->parsed()) o.active = sub;
  if (verbose) Log::set_level(LogLevel::info);
  if (quiet) Log::set_level(LogLevel::error);

  std::string stage = "config";
  try {
    const fs::path dir = o.out;
    if (render->parsed()) {
      stage = "render";
      const SceneBlueprint bp = blueprint_from_json(load_json_file(bp_path));
      validate(bp);
      const std::string svg = render_layout(bp);
      if (svg_path.empty()) {
        std::cout << svg;
      } else {
        write_file(svg_path, svg);
      }
      return 0;
    }

    if (run->parsed()) {
      const RunConfig cfg = resolve_config(o, false);
      const std::string caption = load_caption(prompt, prompt_file);
      auto llm = make_llm(script, cfg);
      const Backends be(cfg);
      stage = "blueprint";
      stage_blueprint(caption, cfg, *llm, dir);
      stage = "generate";
      stage_generate(cfg, be, dir);
      stage = "refine";
      stage_refine(cfg, be, dir);
      stage = "eval";
      const RunEval ev = stage_eval(cfg, be, dir);
      json summary = {{"schema_version", kSchemaVersion}, {"run_dir", dir.string()}};
      summary.update(par_line(ev));
      print(summary);
      return 0;
    }

    if (blueprint->parsed()) {
      const RunConfig cfg = resolve_config(o, false);
      const std::string caption = load_caption(prompt, prompt_file);
      auto llm = make_llm(script, cfg);
      stage = "blueprint";
      const SceneBlueprint bp = stage_blueprint(caption, cfg, *llm, dir);
      print({{"schema_version", kSchemaVersion}, {"run_dir", dir.string()}, {"objects", bp.objects.size()}});
      return 0;
    }

    if (generate->parsed()) {
      const RunConfig cfg = resolve_config(o, true);
      const Backends be(cfg);
      stage = "generate";
      stage_generate(cfg, be, dir);
      print({{"schema_version", kSchemaVersion}, {"run_dir", dir.string()}});
      return 0;
    }

    if (refine_cmd->parsed()) {
      const RunConfig cfg = resolve_config(o, true);
      const Backends be(cfg);
      stage = "refine";
      const RefinementReport r = stage_refine(cfg, be, dir);
      print({{"schema_version", kSchemaVersion}, {"run_dir", dir.string()}, {"order", r.order()}});
      return 0;
    }

    if (eval->parsed()) {
      if (suite_n > 0) {
        const RunConfig cfg = resolve_config(o, false);
        if (cfg.backend != "toy") throw Error(Errc::config_error, "--toy-suite needs the toy backend");
        const Backends be(cfg);
        stage = "eval";
        const SuiteResult res = evaluate_suite(toy_suite(suite_n, suite_seed, cfg.k), cfg, be, workers);
        if (!csv_path.empty()) write_file(csv_path, to_csv(res.refined));
        print(to_json(res));
        return 0;
      }
      const RunConfig cfg = resolve_config(o, true);
      const Backends be(cfg);
      stage = "eval";
      const RunEval ev = stage_eval(cfg, be, dir);
      if (!csv_path.empty()) write_file(csv_path, to_csv(ev.refined));
      json summary = {{"schema_version", kSchemaVersion}, {"run_dir", dir.string()}};
      summary.update(par_line(ev));
      print(summary);
      return 0;
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what(), stage);
  } catch (const std::exception& e) {
    return fail(Errc::io_error, e.what(), stage);
  }
  return 0;
}
