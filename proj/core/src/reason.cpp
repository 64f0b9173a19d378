#include "geovocab/reason.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"

namespace geovocab {

using nlohmann::json;

namespace {

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words{
      "about", "above",   "across", "all",     "along",   "also",    "among",   "an",     "and",    "any",
      "are",   "area",    "around", "as",      "at",      "be",      "been",    "being",  "below",  "between",
      "big",   "both",    "but",    "by",      "can",     "could",   "do",      "does",    "each",   "eg",
      "either", "etc",    "for",    "from",    "had",     "has",     "have",   "how",    "ie",
      "if",    "image",   "in",     "into",    "is",      "it",      "its",     "large",     "less",
      "like",  "may",     "might",  "more",    "most",    "mostly",  "must",    "near",   "no",     "not",
      "of",    "often",   "on",     "only",    "onto",    "or",      "other",   "out",    "over",   "region",
      "same",  "scene",   "should", "similar", "small",   "so",      "some",    "such",   "than",   "that",
      "the",   "their",   "them",   "then",    "there",   "these",   "they",    "this",   "those",  "through",
      "to",    "too",     "typical", "typically", "under", "up",     "usually", "very",   "visible",
      "was",   "were",    "what",   "when",    "where",   "which",   "while",   "who",    "will",   "with",
      "within", "without", "would"};
  return words;
}

std::string fold_plural(std::string token) {
  if (token.size() > 3 && token.back() == 's' && token[token.size() - 2] != 's') token.pop_back();
  return token;
}

bool overlaps(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const auto& t) { return b.count(t) != 0; });
}

std::string describe_scene(const SceneContext& scene) {
  auto text = fmt::format("{} (confidence {:.2f})", scene.label, scene.confidence);
  if (!scene.rationale.empty()) text += ": " + scene.rationale;
  return text;
}

std::string describe_attributes(const VisualAttributeSet& attributes) {
  std::string out;
  for (const auto& a : attributes.attributes) {
    if (!out.empty()) out += "\n";
    out += fmt::format("- [{}] {}", to_string(a.kind), a.description);
    if (a.region_hint) out += " (region: " + *a.region_hint + ")";
  }
  return out;
}

std::string describe_standards(const StandardsStore& store) {
  std::string out;
  for (const auto& c : store.pool) {
    const auto& s = store.standard_for(c.name);
    if (!out.empty()) out += "\n";
    out += "- " + c.name;
    if (c.display != c.name) out += " (" + c.display + ")";
    out += "\n  morphology: " + s.morphology + "\n  spectral-spatial: " + s.spectral_spatial +
           "\n  exclusivity: " + s.exclusivity;
    if (!s.sub_classes.empty()) {
      std::string subs;
      for (const auto& sc : s.sub_classes) subs += (subs.empty() ? "" : ", ") + sc;
      out += "\n  sub-classes: " + subs;
    }
  }
  return out;
}

ChatRequest with_image(ChatRequest request, const ImageRef& image) {
  request.user_parts.insert(request.user_parts.begin(), ImagePart{image});
  return request;
}

void record(StageLog* log, const StructuredReply& reply) {
  if (log == nullptr) return;
  log->prompt = reply.prompt;
  log->raw_response = reply.raw_text;
  log->rounds = reply.rounds;
}

void warn(StageLog* log, std::string message) {
  spdlog::warn("{}", message);
  if (log != nullptr) log->warnings.push_back(std::move(message));
}

void require_payload(const ImageRef& image) {
  if (!image.has_payload()) fail(ErrorCode::PreconditionFailed, "image '" + image.uri + "' has no payload");
}

}  // namespace

std::set<std::string> keyword_set(std::string_view text) {
  std::set<std::string> out;
  std::string token;
  auto flush = [&] {
    if (token.size() >= 2 && stop_words().count(token) == 0) {
      auto folded = fold_plural(std::move(token));
      if (stop_words().count(folded) == 0) out.insert(std::move(folded));
    }
    token.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) != 0) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

SceneContext anchor_scene(const ImageRef& image, Gateway& gateway, const StageSettings& settings, StageLog* log) {
  require_payload(image);
  std::string labels;
  for (const auto& l : seeded_scene_labels()) labels += (labels.empty() ? "" : ", ") + l;
  auto request = settings.make_request("scene_anchor");
  request.user_parts.push_back(TextPart{settings.prompts->render("anchor", {{"scene_labels", labels}})});

  const auto reply = request_structured(
      gateway, settings, with_image(std::move(request), image),
      [](const json& v) -> std::optional<std::string> {
        if (!v.is_object()) return "expected a JSON object";
        if (!v.contains("scene") || !v["scene"].is_string() || v["scene"].get<std::string>().empty()) {
          return "field 'scene' missing or empty";
        }
        if (!v.contains("confidence") || !v["confidence"].is_number()) return "field 'confidence' must be a number";
        if (v.contains("rationale") && !v["rationale"].is_string()) return "field 'rationale' must be a string";
        return std::nullopt;
      },
      ErrorCode::MalformedScene);
  record(log, reply);

  SceneContext scene;
  scene.label = normalize_name(reply.value["scene"].get<std::string>());
  scene.confidence = reply.value["confidence"].get<double>();
  scene.rationale = reply.value.value("rationale", std::string());
  if (scene.confidence < 0.0 || scene.confidence > 1.0) {
    const auto clamped = std::clamp(scene.confidence, 0.0, 1.0);
    warn(log, fmt::format("scene confidence {} clamped to {}", scene.confidence, clamped));
    scene.confidence = clamped;
  }
  return scene;
}

VisualAttributeSet decouple_attributes(const ImageRef& image, const SceneContext& scene, Gateway& gateway,
                                       const StageSettings& settings, StageLog* log) {
  require_payload(image);
  auto request = settings.make_request("decouple");
  request.user_parts.push_back(TextPart{settings.prompts->render(
      "decouple", {{"scene", scene.label}, {"scene_rationale", scene.rationale.empty() ? "no rationale given"
                                                                                       : scene.rationale}})});

  const auto reply = request_structured(
      gateway, settings, with_image(std::move(request), image),
      [](const json& v) -> std::optional<ReplyProblem> {
        if (!v.is_object() || !v.contains("attributes") || !v["attributes"].is_array()) {
          return ReplyProblem("expected {\"attributes\": [...]}");
        }
        if (v["attributes"].empty()) return ReplyProblem("no attributes returned", ErrorCode::EmptyAttributeSet);
        for (const auto& a : v["attributes"]) {
          if (!a.is_object() || !a.contains("description") || !a["description"].is_string() ||
              a["description"].get<std::string>().empty()) {
            return ReplyProblem("every attribute needs a non-empty 'description'");
          }
          if (a.contains("kind") && !a["kind"].is_string()) return ReplyProblem("'kind' must be a string");
          if (a.contains("region_hint") && !a["region_hint"].is_string() && !a["region_hint"].is_null()) {
            return ReplyProblem("'region_hint' must be a string");
          }
        }
        return std::nullopt;
      },
      ErrorCode::MalformedAttributes);
  record(log, reply);

  VisualAttributeSet set;
  set.scene = scene;
  for (const auto& a : reply.value["attributes"]) {
    VisualAttribute attr;
    attr.description = a["description"].get<std::string>();
    const auto kind_text = a.value("kind", std::string());
    if (auto kind = attribute_kind_from_string(kind_text)) {
      attr.kind = *kind;
    } else {
      attr.kind = AttributeKind::Object;
      warn(log, "attribute kind '" + kind_text + "' unknown; treated as object");
    }
    if (a.contains("region_hint") && a["region_hint"].is_string() && !a["region_hint"].get<std::string>().empty()) {
      attr.region_hint = a["region_hint"].get<std::string>();
    }
    set.attributes.push_back(std::move(attr));
  }
  return set;
}

CategoryVerdict rule_fallback_verify(const std::string& category, const SceneContext& scene,
                                     const VisualAttributeSet& attributes, const StandardsStore& store) {
  const auto& standard = store.standard_for(category);
  std::string standard_text = standard.morphology + " " + standard.spectral_spatial;
  for (const auto& sc : standard.sub_classes) standard_text += " " + sc;
  const auto standard_keys = keyword_set(standard_text);

  CategoryVerdict verdict;
  verdict.category = category;
  verdict.decided_by = VerdictSource::RuleEngine;

  std::string vetoed_by;
  for (const auto& attr : attributes.attributes) {
    const auto keys = keyword_set(attr.description);
    if (!overlaps(keys, standard_keys)) continue;
    const DiscriminationRule* veto = nullptr;
    for (const auto& rule : store.rules) {
      if (!rule.decides_against(category)) continue;
      const auto trigger = keyword_set(rule.cue.empty() ? rule.rule : rule.cue);
      if (overlaps(keys, trigger)) {
        veto = &rule;
        break;
      }
    }
    if (veto == nullptr) {
      verdict.present = true;
      verdict.justification = "attribute '" + attr.description + "' matches the " + category + " standard";
      return verdict;
    }
    if (vetoed_by.empty()) vetoed_by = "attribute '" + attr.description + "' assigned to " + veto->decides_for;
  }
  verdict.justification = vetoed_by.empty() ? "no attribute matches the " + category + " standard" : vetoed_by;
  if (!scene.label.empty()) verdict.justification += " (scene: " + scene.label + ")";
  return verdict;
}

AdaptiveVocabulary synthesize_vocabulary(const ImageRef& image, const SceneContext& scene,
                                         const VisualAttributeSet& attributes, const StandardsStore& store,
                                         Gateway& gateway, const StageSettings& settings, StageLog* log) {
  require_payload(image);
  const auto& pool = store.pool;
  for (const auto& c : pool) store.standard_for(c.name);

  auto request = settings.make_request("synthesize");
  request.user_parts.push_back(TextPart{settings.prompts->render(
      "synthesize", {{"scene", describe_scene(scene)},
                     {"attributes", describe_attributes(attributes)},
                     {"standards", describe_standards(store)},
                     {"rules", describe_rules(store.rules)},
                     {"categories", [&] {
                        std::string names;
                        for (const auto& c : pool) names += (names.empty() ? "" : ", ") + c.name;
                        return names;
                      }()}})});

  const auto reply = request_structured(
      gateway, settings, with_image(std::move(request), image),
      [](const json& v) -> std::optional<std::string> {
        if (!v.is_object() || !v.contains("verdicts") || !v["verdicts"].is_array()) {
          return "expected {\"verdicts\": [...]}";
        }
        for (const auto& e : v["verdicts"]) {
          if (!e.is_object() || !e.contains("category") || !e["category"].is_string()) {
            return "every verdict needs a string 'category'";
          }
          if (!e.contains("present") || !e["present"].is_boolean()) return "every verdict needs a boolean 'present'";
          if (e.contains("justification") && !e["justification"].is_string()) {
            return "'justification' must be a string";
          }
        }
        return std::nullopt;
      },
      ErrorCode::MalformedVerdicts);
  record(log, reply);

  std::vector<std::optional<CategoryVerdict>> slots(pool.size());
  for (const auto& e : reply.value["verdicts"]) {
    const auto name = normalize_name(e["category"].get<std::string>());
    const auto idx = pool.index_of(name);
    if (!idx) {
      warn(log, "verdict for unknown category '" + name + "' dropped");
      continue;
    }
    if (slots[*idx]) {
      warn(log, "duplicate verdict for '" + name + "' ignored");
      continue;
    }
    slots[*idx] = CategoryVerdict{pool[*idx].name, e["present"].get<bool>(), e.value("justification", std::string()),
                                  VerdictSource::Mllm};
  }
  std::vector<CategoryVerdict> verdicts;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      verdicts.push_back(std::move(*slots[i]));
    } else {
      warn(log, "no verdict for '" + pool[i].name + "'; decided by the rule engine");
      verdicts.push_back(rule_fallback_verify(pool[i].name, scene, attributes, store));
    }
  }
  auto vocab = AdaptiveVocabulary::from_verdicts(pool, std::move(verdicts));
  if (vocab.fallback_used()) warn(log, "no category verified present; using the full pool");
  return vocab;
}

ReasoningTrace run_chain(const ImageRef& image, const StandardsStore& store, Gateway& gateway,
                         const StageSettings& settings) {
  ReasoningTrace trace;
  trace.image = image;

  auto timed = [&](const char* stage, auto&& body) {
    StageLog log;
    const auto start = std::chrono::steady_clock::now();
    try {
      body(log);
    } catch (const Error& e) {
      throw Error(e).with_stage(stage);
    }
    trace.stage_timings_ms[stage] =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    trace.raw_responses[stage] = log.raw_response;
    trace.prompts[stage] = log.prompt;
    for (auto& w : log.warnings) trace.warnings.push_back(std::string(stage) + ": " + w);
  };

  timed("anchor", [&](StageLog& log) { trace.scene = anchor_scene(image, gateway, settings, &log); });
  timed("decouple",
        [&](StageLog& log) { trace.attributes = decouple_attributes(image, trace.scene, gateway, settings, &log); });
  timed("synthesize", [&](StageLog& log) {
    trace.vocabulary =
        synthesize_vocabulary(image, trace.scene, trace.attributes, store, gateway, settings, &log);
  });
  return trace;
}

namespace {

json scene_to_json(const SceneContext& s) {
  return {{"label", s.label}, {"confidence", s.confidence}, {"rationale", s.rationale}};
}

SceneContext scene_from_json(const json& j) {
  return {j.at("label").get<std::string>(), j.at("confidence").get<double>(), j.value("rationale", std::string())};
}

}  // namespace

json trace_to_json(const ReasoningTrace& trace, bool include_timings) {
  json attrs = json::array();
  for (const auto& a : trace.attributes.attributes) {
    json entry{{"description", a.description}, {"kind", to_string(a.kind)}};
    if (a.region_hint) entry["region_hint"] = *a.region_hint;
    attrs.push_back(std::move(entry));
  }
  json verdicts = json::array();
  for (const auto& v : trace.vocabulary.verdicts()) {
    verdicts.push_back({{"category", v.category},
                        {"present", v.present},
                        {"justification", v.justification},
                        {"decided_by", to_string(v.decided_by)}});
  }
  json doc{
      {"image", {{"uri", trace.image.uri}, {"mime", trace.image.mime}, {"content_hash", trace.image.content_hash}}},
      {"scene", scene_to_json(trace.scene)},
      {"attributes", std::move(attrs)},
      {"vocabulary",
       {{"verdicts", std::move(verdicts)},
        {"selected", trace.vocabulary.selected()},
        {"fallback_used", trace.vocabulary.fallback_used()}}},
      {"raw_responses", trace.raw_responses},
      {"prompts", trace.prompts},
      {"warnings", trace.warnings},
  };
  if (include_timings) doc["stage_timings_ms"] = trace.stage_timings_ms;
  return doc;
}

ReasoningTrace trace_from_json(const json& doc, const CategoryPool& pool) {
  try {
    ReasoningTrace trace;
    const auto& img = doc.at("image");
    trace.image.uri = img.at("uri").get<std::string>();
    trace.image.mime = img.value("mime", std::string());
    trace.image.content_hash = img.at("content_hash").get<std::string>();
    trace.scene = scene_from_json(doc.at("scene"));
    trace.attributes.scene = trace.scene;
    for (const auto& a : doc.at("attributes")) {
      VisualAttribute attr;
      attr.description = a.at("description").get<std::string>();
      const auto kind = attribute_kind_from_string(a.at("kind").get<std::string>());
      if (!kind) fail(ErrorCode::InvalidDocument, "unknown attribute kind in trace");
      attr.kind = *kind;
      if (a.contains("region_hint")) attr.region_hint = a["region_hint"].get<std::string>();
      trace.attributes.attributes.push_back(std::move(attr));
    }
    const auto& vocab = doc.at("vocabulary");
    std::vector<CategoryVerdict> verdicts;
    for (const auto& v : vocab.at("verdicts")) {
      verdicts.push_back({v.at("category").get<std::string>(), v.at("present").get<bool>(),
                          v.value("justification", std::string()),
                          verdict_source_from_string(v.at("decided_by").get<std::string>())});
    }
    trace.vocabulary = AdaptiveVocabulary::restore(pool, std::move(verdicts), vocab.value("fallback_used", false));
    if (vocab.contains("selected") && vocab["selected"].get<std::vector<std::string>>() != trace.vocabulary.selected()) {
      fail(ErrorCode::InvalidDocument, "trace 'selected' disagrees with its verdicts");
    }
    trace.raw_responses = doc.value("raw_responses", std::map<std::string, std::string>{});
    trace.prompts = doc.value("prompts", std::map<std::string, std::string>{});
    trace.warnings = doc.value("warnings", std::vector<std::string>{});
    trace.stage_timings_ms = doc.value("stage_timings_ms", std::map<std::string, std::int64_t>{});
    return trace;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed trace: ") + e.what());
  }
}

std::filesystem::path trace_file_name(const ReasoningTrace& trace) {
  return trace.image.content_hash + ".trace.json";
}

void save_trace(const ReasoningTrace& trace, const std::filesystem::path& path) {
  write_json_file(path, trace_to_json(trace));
}

ReasoningTrace load_trace(const std::filesystem::path& path, const CategoryPool& pool) {
  return trace_from_json(read_json_file(path), pool);
}

}  // namespace geovocab
