#include "geovocab/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geovocab/digest.hpp"
#include "geovocab/distill.hpp"
#include "geovocab/file_util.hpp"
#include "geovocab/parallel.hpp"
#include "geovocab/prompts.hpp"
#include "geovocab/tensor_io.hpp"

#ifndef GEOVOCAB_VERSION
#define GEOVOCAB_VERSION "0.0.0"
#endif

namespace geovocab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const Error& error) { return static_cast<int>(category_of(error.code())); }

CategoryPool resolve_pool(const std::string& spec) {
  if (!fs::exists(spec)) {
    const auto name = normalize_name(spec);
    if (name == "loveda") return loveda_pool();
    if (name == "gid5") return gid5_pool();
    fail(ErrorCode::ConfigError, "pool '" + spec + "' is neither a file nor a built-in pool (loveda, gid5)");
  }
  return load_pool(spec);
}

namespace {

StageSettings stage_settings(const std::optional<fs::path>& prompts_dir) {
  return StageSettings::from_dir(prompts_dir.value_or(PromptLibrary::default_dir()));
}

std::string describe_calls(const std::map<std::string, int>& calls) {
  std::string out;
  for (const auto& [schema, n] : calls) out += fmt::format("{}{}={}", out.empty() ? "" : " ", schema, n);
  return out.empty() ? "none" : out;
}

std::vector<fs::path> sorted_files(const fs::path& dir, std::string_view extension = {}) {
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!extension.empty() && entry.path().extension() != extension) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// stem -> file, rejecting two files with the same stem.
std::map<std::string, fs::path> files_by_stem(const fs::path& dir, std::string_view extension = {}) {
  std::map<std::string, fs::path> out;
  for (const auto& f : sorted_files(dir, extension)) {
    const auto stem = f.stem().string();
    if (!out.emplace(stem, f).second) {
      fail(ErrorCode::UnmatchedPair, "two files share the stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

std::string file_hash(const fs::path& path) { return sha256_hex(read_file_bytes(path)); }

json failure_json(const ImageFailure& f) {
  return {{"image", f.image}, {"stage", f.stage}, {"code", to_string(f.code)}, {"message", f.message}};
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

// distill -------------------------------------------------------------------

DistillOutcome cmd_distill(const DistillOptions& options) {
  const auto pool = resolve_pool(options.common.pool);
  auto gateway = Gateway::from_config(options.common.gateway);
  DistillConfig config{stage_settings(options.common.prompts_dir), std::nullopt, options.common.jobs};
  if (options.pairs_file) config.override_pairs = load_pair_overrides(*options.pairs_file, pool);

  auto result = build_standards(pool, gateway, config);
  save_standards(result.store, options.out);

  DistillOutcome outcome{std::move(result.store), gateway.calls_by_schema(), std::move(result.warnings)};
  spdlog::info("distill: {} standards, {} rules -> {}", outcome.store.standards.size(), outcome.store.rules.size(),
               options.out.string());
  spdlog::info("distill: model calls {}", describe_calls(outcome.calls_by_schema));
  return outcome;
}

// reason --------------------------------------------------------------------

std::vector<fs::path> list_images(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> images;
  for (const auto& input : inputs) {
    if (fs::is_directory(input)) {
      for (auto& f : sorted_files(input)) images.push_back(std::move(f));
    } else {
      images.push_back(input);
    }
  }
  return images;
}

ReasonOutcome cmd_reason(const ReasonOptions& options) {
  const auto pool = resolve_pool(options.common.pool);
  const auto store = load_standards(options.standards);
  if (!(store.pool == pool)) {
    fail(ErrorCode::ConfigError, options.standards.string() + " was built for a different category pool");
  }
  const auto images = list_images(options.inputs);
  if (images.empty()) fail(ErrorCode::PreconditionFailed, "no images given");
  auto gateway = Gateway::from_config(options.common.gateway);
  const auto settings = stage_settings(options.common.prompts_dir);
  fs::create_directories(options.out_dir);

  std::vector<std::optional<fs::path>> written(images.size());
  std::vector<std::optional<ImageFailure>> failed(images.size());
  std::vector<std::exception_ptr> errors(images.size());
  parallel_for(images.size(), options.common.jobs, [&](std::size_t i) {
    try {
      const auto trace = run_chain(load_image(images[i]), store, gateway, settings);
      const auto path = options.out_dir / trace_file_name(trace);
      save_trace(trace, path);
      written[i] = path;
    } catch (const Error& e) {
      spdlog::error("reason: {}: {}", images[i].string(), e.what());
      failed[i] = ImageFailure{images[i].string(), e.stage(), e.code(), e.what()};
      errors[i] = std::current_exception();
    }
  });

  ReasonOutcome outcome;
  json failures = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (written[i]) outcome.traces.push_back(*written[i]);
    if (failed[i]) {
      failures.push_back(failure_json(*failed[i]));
      outcome.failures.push_back(std::move(*failed[i]));
    }
  }
  const auto failure_manifest = options.out_dir / "failures.json";
  if (!outcome.failures.empty()) {
    write_json_file(failure_manifest, {{"failures", failures}});
  } else if (fs::exists(failure_manifest)) {
    fs::remove(failure_manifest);
  }
  spdlog::info("reason: {} traces, {} failures; model calls {}", outcome.traces.size(), outcome.failures.size(),
               describe_calls(gateway.calls_by_schema()));
  if (!outcome.failures.empty() && !options.keep_going) {
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return outcome;
}

// segment -------------------------------------------------------------------

LabelRaster cmd_segment(const SegmentOptions& options) {
  const auto pool = resolve_pool(options.pool);
  if (options.full_pool == options.trace.has_value()) {
    fail(ErrorCode::ConfigError, "segment needs exactly one of --trace or --full-pool");
  }
  const auto features = load_feature_map(options.features);
  const auto embeddings = load_text_embeddings(options.embeddings, pool, options.sidecar);
  const auto vocab =
      options.full_pool ? AdaptiveVocabulary::full_pool(pool) : load_trace(*options.trace, pool).vocabulary;
  try {
    auto raster = segment(features, embeddings, vocab, options.alignment);
    save_label_raster(raster, options.out);
    return raster;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DimMismatch) throw;
    throw Error(e.code(), options.features.string() + " vs " + options.embeddings.string() + ": " + e.detail());
  }
}

// eval ----------------------------------------------------------------------

std::map<std::string, ReasoningTrace> load_traces_by_stem(const fs::path& dir, const CategoryPool& pool) {
  std::map<std::string, ReasoningTrace> out;
  for (const auto& f : sorted_files(dir, ".json")) {
    if (f.filename().string().find(".trace.json") == std::string::npos) continue;
    auto trace = load_trace(f, pool);
    const auto stem = trace.image.stem();
    if (!out.emplace(stem, std::move(trace)).second) {
      fail(ErrorCode::InvalidDocument, "two traces describe an image with stem '" + stem + "'");
    }
  }
  return out;
}

namespace {

std::vector<std::string> unmatched(const std::map<std::string, fs::path>& a, const std::map<std::string, fs::path>& b,
                                   const std::string& a_name, const std::string& b_name) {
  std::vector<std::string> out;
  for (const auto& [stem, _] : a) {
    if (b.count(stem) == 0) out.push_back(stem + " (" + a_name + " only)");
  }
  for (const auto& [stem, _] : b) {
    if (a.count(stem) == 0) out.push_back(stem + " (" + b_name + " only)");
  }
  return out;
}

ConfusionMatrix confusion_over(const std::vector<std::pair<fs::path, fs::path>>& pairs, const CategoryPool& pool,
                               int jobs, std::vector<std::set<std::string>>* gt_present) {
  std::vector<ConfusionMatrix> partial(pairs.size(), ConfusionMatrix(pool));
  if (gt_present != nullptr) gt_present->assign(pairs.size(), {});
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto& [pred_path, gt_path] = pairs[i];
    const auto pred = load_label_raster(pred_path, pool);
    const auto gt = load_label_raster(gt_path, pool);
    try {
      partial[i].accumulate(pred, gt);
    } catch (const Error& e) {
      throw Error(e.code(), pred_path.filename().string() + " vs " + gt_path.string() + ": " + e.detail());
    }
    if (gt_present != nullptr) (*gt_present)[i] = present_categories(gt, pool);
  });
  ConfusionMatrix cm(pool);
  for (const auto& p : partial) cm.merge(p);
  return cm;
}

}  // namespace

EvalOutcome cmd_eval(const EvalOptions& options) {
  const auto pool = resolve_pool(options.pool);
  const auto preds = files_by_stem(options.pred_dir, ".npy");
  const auto gts = files_by_stem(options.gt_dir, ".npy");
  if (auto missing = unmatched(preds, gts, "prediction", "ground truth"); !missing.empty()) {
    fail(ErrorCode::UnmatchedPair, "unmatched files: " + join(missing));
  }
  std::vector<std::pair<fs::path, fs::path>> pairs;
  std::vector<std::string> stems;
  for (const auto& [stem, path] : preds) {
    pairs.emplace_back(path, gts.at(stem));
    stems.push_back(stem);
  }
  if (pairs.empty()) fail(ErrorCode::PreconditionFailed, "no prediction files in " + options.pred_dir.string());

  std::vector<std::set<std::string>> present;
  const auto cm = confusion_over(pairs, pool, options.jobs, &present);

  std::optional<double> cat_acc;
  std::size_t fallbacks = 0;
  if (options.traces_dir) {
    const auto traces = load_traces_by_stem(*options.traces_dir, pool);
    std::vector<ImageCategories> per_image;
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < stems.size(); ++i) {
      auto it = traces.find(stems[i]);
      if (it == traces.end()) {
        missing.push_back(stems[i]);
        continue;
      }
      const auto& selected = it->second.vocabulary.selected();
      per_image.push_back({stems[i], {selected.begin(), selected.end()}, present[i]});
      fallbacks += it->second.vocabulary.fallback_used() ? 1 : 0;
    }
    if (!missing.empty()) fail(ErrorCode::UnmatchedPair, "no trace for: " + join(missing));
    cat_acc = category_accuracy(per_image);
  }

  EvalOutcome outcome;
  outcome.report = make_report(cm, cat_acc, pairs.size(), fallbacks);
  outcome.rendered = render_report(outcome.report, options.format);
  if (options.out) write_file_atomic(*options.out, outcome.rendered);
  return outcome;
}

// pipeline ------------------------------------------------------------------

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::FullPoolBaseline: return "full_pool_baseline";
    case Mode::MllmDescriptionsOnly: return "mllm_descriptions_only";
    case Mode::GrCot: return "gr_cot";
  }
  return "gr_cot";
}

Mode mode_from_string(std::string_view text) {
  if (text == "full_pool_baseline") return Mode::FullPoolBaseline;
  if (text == "mllm_descriptions_only") return Mode::MllmDescriptionsOnly;
  if (text == "gr_cot") return Mode::GrCot;
  fail(ErrorCode::ConfigError,
       "unknown mode '" + std::string(text) + "' (expected full_pool_baseline, mllm_descriptions_only or gr_cot)");
}

namespace {

template <typename T>
T config_value(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ConfigError, std::string("config field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::ConfigError, where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::ConfigError, "unknown field '" + key + "' in " + where);
    }
  }
}

std::optional<fs::path> optional_path(const json& obj, const char* key, const fs::path& base) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return (base / config_value<std::string>(obj, key, "")).lexically_normal();
}

fs::path required_path(const json& obj, const char* key, const fs::path& base) {
  auto p = optional_path(obj, key, base);
  if (!p) fail(ErrorCode::ConfigError, std::string("config field '") + key + "' is required");
  return *p;
}

json path_or_null(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) fail(ErrorCode::ConfigError, std::string(what) + " does not exist: " + p.string());
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc,
                 {"pool", "standards", "features_dir", "embeddings", "embeddings_sidecar", "description_embeddings",
                  "description_embeddings_sidecar", "images_dir", "gt_dir", "output_dir", "prompts_dir", "gateway",
                  "alignment", "mode", "jobs"},
                 "pipeline config");
  PipelineConfig c;
  const auto pool = config_value<std::string>(doc, "pool", "loveda");
  const auto name = normalize_name(pool);
  c.pool = (name == "loveda" || name == "gid5") ? name : (base_dir / pool).lexically_normal().string();
  c.standards_path = optional_path(doc, "standards", base_dir);
  c.features_dir = required_path(doc, "features_dir", base_dir);
  c.embeddings_path = required_path(doc, "embeddings", base_dir);
  c.embeddings_sidecar = required_path(doc, "embeddings_sidecar", base_dir);
  c.description_embeddings_path = optional_path(doc, "description_embeddings", base_dir);
  c.description_embeddings_sidecar = optional_path(doc, "description_embeddings_sidecar", base_dir);
  c.images_dir = optional_path(doc, "images_dir", base_dir).value_or(fs::path());
  c.gt_dir = optional_path(doc, "gt_dir", base_dir);
  c.output_dir = required_path(doc, "output_dir", base_dir);
  c.prompts_dir = optional_path(doc, "prompts_dir", base_dir);
  c.mode = mode_from_string(config_value<std::string>(doc, "mode", "gr_cot"));
  c.jobs = config_value<int>(doc, "jobs", 4);

  c.gateway = GatewayConfig::from_env();
  if (doc.contains("gateway")) {
    const auto& g = doc["gateway"];
    reject_unknown(g,
                   {"endpoint_url", "api_key_env_name", "model_name", "max_retries", "backoff_base_ms",
                    "max_concurrent_requests", "timeout_ms", "mock_fixture_dir"},
                   "gateway config");
    c.gateway.endpoint_url = config_value<std::string>(g, "endpoint_url", c.gateway.endpoint_url);
    c.gateway.api_key_env_name = config_value<std::string>(g, "api_key_env_name", c.gateway.api_key_env_name);
    c.gateway.model_name = config_value<std::string>(g, "model_name", c.gateway.model_name);
    c.gateway.max_retries = config_value<int>(g, "max_retries", c.gateway.max_retries);
    c.gateway.backoff_base_ms = config_value<int>(g, "backoff_base_ms", c.gateway.backoff_base_ms);
    c.gateway.max_concurrent_requests =
        config_value<int>(g, "max_concurrent_requests", c.gateway.max_concurrent_requests);
    c.gateway.timeout_ms = config_value<int>(g, "timeout_ms", c.gateway.timeout_ms);
    c.gateway.mock_fixture_dir = optional_path(g, "mock_fixture_dir", base_dir);
  }
  if (doc.contains("alignment")) {
    const auto& a = doc["alignment"];
    reject_unknown(a, {"similarity", "always_include", "upsample", "target_size"}, "alignment config");
    c.alignment.similarity = similarity_from_string(config_value<std::string>(a, "similarity", "cosine"));
    c.alignment.always_include = config_value<std::vector<std::string>>(a, "always_include", {});
    c.alignment.upsample = upsample_from_string(config_value<std::string>(a, "upsample", "none"));
    if (a.contains("target_size")) {
      const auto size = config_value<std::vector<std::size_t>>(a, "target_size", {});
      if (size.size() != 2) fail(ErrorCode::ConfigError, "alignment.target_size must be [height, width]");
      c.alignment.target_height = size[0];
      c.alignment.target_width = size[1];
    }
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json doc;
  try {
    doc = read_json_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.detail());
  }
  return from_json(doc, fs::absolute(path).parent_path());
}

json PipelineConfig::to_json() const {
  json gateway_json{{"endpoint_url", gateway.endpoint_url},
                    {"api_key_env_name", gateway.api_key_env_name},
                    {"model_name", gateway.model_name},
                    {"max_retries", gateway.max_retries},
                    {"backoff_base_ms", gateway.backoff_base_ms},
                    {"max_concurrent_requests", gateway.max_concurrent_requests},
                    {"timeout_ms", gateway.timeout_ms},
                    {"mock_fixture_dir", path_or_null(gateway.mock_fixture_dir)}};
  json alignment_json{{"similarity", to_string(alignment.similarity)},
                      {"always_include", alignment.always_include},
                      {"upsample", to_string(alignment.upsample)}};
  if (alignment.target_height != 0 || alignment.target_width != 0) {
    alignment_json["target_size"] = {alignment.target_height, alignment.target_width};
  }
  return {{"pool", pool},
          {"standards", path_or_null(standards_path)},
          {"features_dir", features_dir.string()},
          {"embeddings", embeddings_path.string()},
          {"embeddings_sidecar", embeddings_sidecar.string()},
          {"description_embeddings", path_or_null(description_embeddings_path)},
          {"description_embeddings_sidecar", path_or_null(description_embeddings_sidecar)},
          {"images_dir", images_dir.string()},
          {"gt_dir", path_or_null(gt_dir)},
          {"output_dir", output_dir.string()},
          {"prompts_dir", path_or_null(prompts_dir)},
          {"mode", to_string(mode)},
          {"jobs", jobs},
          {"gateway", std::move(gateway_json)},
          {"alignment", std::move(alignment_json)}};
}

void PipelineConfig::validate() const {
  if (jobs < 1) fail(ErrorCode::ConfigError, "jobs must be >= 1");
  require_exists(features_dir, "features_dir");
  require_exists(embeddings_path, "embeddings");
  require_exists(embeddings_sidecar, "embeddings_sidecar");
  if (gt_dir) require_exists(*gt_dir, "gt_dir");
  if (prompts_dir) require_exists(*prompts_dir, "prompts_dir");
  if (description_embeddings_path.has_value() != description_embeddings_sidecar.has_value()) {
    fail(ErrorCode::ConfigError, "description_embeddings and description_embeddings_sidecar go together");
  }
  if (description_embeddings_path) {
    require_exists(*description_embeddings_path, "description_embeddings");
    require_exists(*description_embeddings_sidecar, "description_embeddings_sidecar");
  }
  if (mode != Mode::FullPoolBaseline) {
    if (!standards_path) fail(ErrorCode::ConfigError, std::string(to_string(mode)) + " mode requires 'standards'");
    require_exists(*standards_path, "standards");
  }
  if (mode == Mode::GrCot) {
    if (images_dir.empty()) fail(ErrorCode::ConfigError, "gr_cot mode requires 'images_dir'");
    require_exists(images_dir, "images_dir");
    gateway.validate();
    if (gateway.mock_fixture_dir) require_exists(*gateway.mock_fixture_dir, "gateway.mock_fixture_dir");
  }
  if (alignment.upsample == Upsample::Nearest && alignment.target_height == 0 && !gt_dir) {
    fail(ErrorCode::ConfigError, "nearest upsampling without target_size needs gt_dir to take sizes from");
  }
  const auto categories = resolve_pool(pool);
  for (const auto& name : alignment.always_include) {
    if (!categories.contains(name)) fail(ErrorCode::UnknownCategory, "alignment.always_include: '" + name + "' is not in the pool");
  }
}

namespace {

/// Drops execution-only settings.
json outcome_relevant(json config) {
  config.erase("jobs");
  config.erase("output_dir");
  return config;
}

}  // namespace

std::string manifest_digest(const json& manifest) {
  json canonical = manifest;
  if (canonical.contains("config")) canonical["config"] = outcome_relevant(canonical["config"]);
  canonical.erase("created_at");
  canonical.erase("timings_ms");
  canonical.erase("digest");
  return sha256_hex(canonical.dump());
}

namespace {

/// Category prompt text enriched with the distilled standard.
std::string enhanced_category_prompt(const Category& c, const InterpretationStandard& s) {
  return c.display + ": " + s.morphology + " " + s.spectral_spatial;
}

template <typename Fn>
auto timed_stage(json& timings, const char* stage, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    timings[stage] =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto result = fn();
      finish();
      return result;
    }
  } catch (const Error& e) {
    if (!e.stage().empty()) throw Error(e.code(), stage + std::string(": ") + e.detail()).with_stage(e.stage());
    throw Error(e).with_stage(stage);
  }
}

}  // namespace

PipelineOutcome cmd_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto pool = resolve_pool(config.pool);
  {
    auto check = config.alignment;
    if (check.upsample == Upsample::Nearest && check.target_height == 0) check.target_height = check.target_width = 1;
    check.validate(pool);
  }

  json timings = json::object();
  json stages = json::object();
  json inputs = json::object();
  json per_image = json::object();
  const auto features = files_by_stem(config.features_dir, ".npy");
  if (features.empty()) fail(ErrorCode::PreconditionFailed, "no feature files in " + config.features_dir.string());
  std::vector<std::string> stems;
  for (const auto& [stem, _] : features) stems.push_back(stem);

  std::optional<std::map<std::string, fs::path>> gts;
  if (config.gt_dir) {
    gts = files_by_stem(*config.gt_dir, ".npy");
    std::map<std::string, fs::path> feature_only;
    for (const auto& s : stems) feature_only[s] = features.at(s);
    if (auto missing = unmatched(feature_only, *gts, "features", "ground truth"); !missing.empty()) {
      fail(ErrorCode::UnmatchedPair, "unmatched files: " + join(missing));
    }
  }

  std::optional<StandardsStore> store;
  if (config.standards_path) {
    store = load_standards(*config.standards_path);
    if (!(store->pool == pool)) {
      fail(ErrorCode::ConfigError, config.standards_path->string() + " was built for a different category pool");
    }
    inputs["standards"] = file_hash(*config.standards_path);
  }
  inputs["pool"] = pool_to_json(pool);
  inputs["embeddings"] = file_hash(config.embeddings_path);
  inputs["embeddings_sidecar"] = file_hash(config.embeddings_sidecar);

  auto embeddings = load_text_embeddings(config.embeddings_path, pool, config.embeddings_sidecar);
  json category_prompts = nullptr;
  if (config.mode == Mode::MllmDescriptionsOnly) {
    category_prompts = json::object();
    for (const auto& c : pool) category_prompts[c.name] = enhanced_category_prompt(c, store->standard_for(c.name));
    if (config.description_embeddings_path) {
      embeddings =
          load_text_embeddings(*config.description_embeddings_path, pool, *config.description_embeddings_sidecar);
      inputs["description_embeddings"] = file_hash(*config.description_embeddings_path);
    }
  }

  const auto out = config.output_dir;
  fs::create_directories(out / "predictions");

  // reason
  std::vector<AdaptiveVocabulary> vocabs(stems.size(), AdaptiveVocabulary::full_pool(pool));
  std::vector<std::optional<std::string>> trace_files(stems.size());
  json prompt_versions = nullptr;
  if (config.mode == Mode::GrCot) {
    const auto images = files_by_stem(config.images_dir);
    std::vector<std::string> missing;
    for (const auto& s : stems) {
      if (images.count(s) == 0) missing.push_back(s);
    }
    if (!missing.empty()) fail(ErrorCode::UnmatchedPair, "no image for: " + join(missing));
    auto gateway = Gateway::from_config(config.gateway);
    const auto settings = stage_settings(config.prompts_dir);
    prompt_versions = json::object();
    for (const char* name : {"system", "anchor", "decouple", "synthesize", "repair"}) {
      prompt_versions[name] = settings.prompts->version(name);
    }
    fs::create_directories(out / "traces");
    timed_stage(timings, "reason", [&] {
      parallel_for(stems.size(), config.jobs, [&](std::size_t i) {
        const auto image = load_image(images.at(stems[i]));
        try {
          const auto trace = run_chain(image, *store, gateway, settings);
          const auto rel = fs::path("traces") / trace_file_name(trace);
          save_trace(trace, out / rel);
          vocabs[i] = trace.vocabulary;
          trace_files[i] = rel.generic_string();
        } catch (const Error& e) {
          throw Error(e.code(), "image '" + stems[i] + "': " + e.detail()).with_stage(e.stage());
        }
      });
    });
    for (std::size_t i = 0; i < stems.size(); ++i) inputs["images"][stems[i]] = file_hash(images.at(stems[i]));
    stages["reason"] = {{"status", "ok"}, {"images", stems.size()}, {"gateway_calls", gateway.calls_by_schema()}};
  } else {
    stages["reason"] = {{"status", "skipped"}};
  }

  // segment
  std::vector<std::string> prediction_files(stems.size());
  timed_stage(timings, "segment", [&] {
    parallel_for(stems.size(), config.jobs, [&](std::size_t i) {
      const auto& features_path = features.at(stems[i]);
      const auto fmap = load_feature_map(features_path);
      auto alignment = config.alignment;
      alignment.jobs = 1;
      if (alignment.upsample == Upsample::Nearest && alignment.target_height == 0) {
        const auto gt = load_label_raster(gts->at(stems[i]), pool);
        alignment.target_height = gt.height();
        alignment.target_width = gt.width();
      }
      try {
        const auto raster = segment(fmap, embeddings, vocabs[i], alignment);
        const auto rel = fs::path("predictions") / (stems[i] + ".npy");
        save_label_raster(raster, out / rel);
        prediction_files[i] = rel.generic_string();
      } catch (const Error& e) {
        throw Error(e.code(), features_path.string() + ": " + e.detail());
      }
    });
  });
  stages["segment"] = {{"status", "ok"}, {"images", stems.size()}};

  for (std::size_t i = 0; i < stems.size(); ++i) {
    auto& entry = inputs["features"][stems[i]];
    entry = file_hash(features.at(stems[i]));
    if (gts) inputs["ground_truth"][stems[i]] = file_hash(gts->at(stems[i]));
    per_image[stems[i]] = {{"selected", vocabs[i].selected()},
                           {"fallback_used", vocabs[i].fallback_used()},
                           {"trace", trace_files[i] ? json(*trace_files[i]) : json(nullptr)},
                           {"prediction", prediction_files[i]}};
  }

  // eval
  PipelineOutcome outcome;
  if (gts) {
    outcome.report = timed_stage(timings, "eval", [&] {
      std::vector<std::pair<fs::path, fs::path>> pairs;
      for (std::size_t i = 0; i < stems.size(); ++i) pairs.emplace_back(out / prediction_files[i], gts->at(stems[i]));
      std::vector<std::set<std::string>> present;
      const auto cm = confusion_over(pairs, pool, config.jobs, &present);
      std::vector<ImageCategories> cats;
      std::size_t fallbacks = 0;
      for (std::size_t i = 0; i < stems.size(); ++i) {
        const auto& sel = vocabs[i].selected();
        cats.push_back({stems[i], {sel.begin(), sel.end()}, present[i]});
        fallbacks += vocabs[i].fallback_used() ? 1 : 0;
      }
      return make_report(cm, category_accuracy(cats), stems.size(), fallbacks);
    });
    write_file_atomic(out / "report.json", render_report(*outcome.report, ReportFormat::Json));
    write_file_atomic(out / "report.txt", render_report(*outcome.report, ReportFormat::TextTable));
    stages["eval"] = {{"status", "ok"}, {"images", stems.size()}};
  } else {
    stages["eval"] = {{"status", "skipped"}};
  }

  json outputs = json::object();
  for (std::size_t i = 0; i < stems.size(); ++i) {
    outputs[prediction_files[i]] = file_hash(out / prediction_files[i]);
    if (trace_files[i]) outputs[*trace_files[i]] = file_hash(out / *trace_files[i]);
  }
  if (outcome.report) {
    for (const char* f : {"report.json", "report.txt"}) outputs[f] = file_hash(out / f);
  }

  const auto config_json = config.to_json();
  json manifest{{"tool", "geovocab"},
                {"version", GEOVOCAB_VERSION},
                {"mode", to_string(config.mode)},
                {"config", config_json},
                {"config_digest", sha256_hex(outcome_relevant(config_json).dump())},
                {"inputs", std::move(inputs)},
                {"prompt_versions", std::move(prompt_versions)},
                {"category_prompts", std::move(category_prompts)},
                {"images", std::move(per_image)},
                {"stages", std::move(stages)},
                {"outputs", std::move(outputs)},
                {"report", outcome.report ? report_to_json(*outcome.report) : json(nullptr)},
                {"created_at", rfc3339_now()},
                {"timings_ms", std::move(timings)}};
  outcome.digest = manifest_digest(manifest);
  manifest["digest"] = outcome.digest;
  write_json_file(out / "manifest.json", manifest);
  outcome.manifest = std::move(manifest);
  spdlog::info("pipeline[{}]: {} images, digest {}", to_string(config.mode), stems.size(), outcome.digest);
  return outcome;
}

}  // namespace geovocab::cli
