#include "geovocab/distill.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"
#include "geovocab/parallel.hpp"

namespace geovocab {

using nlohmann::json;

namespace {

bool non_empty_string(const json& obj, const char* key) {
  return obj.contains(key) && obj[key].is_string() && !obj[key].get<std::string>().empty();
}

std::vector<std::string> string_list(const json& value) {
  std::vector<std::string> out;
  if (value.is_string()) {
    out.push_back(value.get<std::string>());
  } else if (value.is_array()) {
    for (const auto& v : value) {
      if (v.is_string() && !v.get<std::string>().empty()) out.push_back(v.get<std::string>());
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += sep;
    out += item;
  }
  return out;
}

std::string pool_listing(const CategoryPool& pool) { return join(pool.names(), ", "); }

std::string lowercase(std::string s) { return normalize_name(s); }

Error tagged(const Error& e, const std::string& stage, const std::string& subject) {
  return Error(e.code(), subject + ": " + e.detail()).with_stage(stage);
}

}  // namespace

CategoryPair canonical_pair(const CategoryPool& pool, const std::string& a, const std::string& b) {
  const auto ia = pool.require_index(a);
  const auto ib = pool.require_index(b);
  if (ia == ib) fail(ErrorCode::PreconditionFailed, "pair (" + a + ", " + b + ") names one category twice");
  return ia < ib ? CategoryPair{pool[ia].name, pool[ib].name} : CategoryPair{pool[ib].name, pool[ia].name};
}

std::string enhance_category(const Category& category, const CategoryPool& pool, Gateway& gateway,
                             const StageSettings& settings) {
  auto request = settings.make_request("enhance");
  request.user_parts.push_back(TextPart{settings.prompts->render(
      "enhance", {{"category", category.name}, {"display", category.display}, {"pool", pool_listing(pool)}})});

  const auto reply = request_structured(
      gateway, settings, std::move(request),
      [](const json& v) -> std::optional<std::string> {
        if (!v.is_object()) return "expected a JSON object";
        for (const char* key : {"geometry", "boundaries", "spectra"}) {
          if (!non_empty_string(v, key)) return std::string("field '") + key + "' missing or empty";
        }
        if (!v.contains("sub_classes") || string_list(v["sub_classes"]).empty()) {
          return "field 'sub_classes' missing or empty";
        }
        return std::nullopt;
      },
      ErrorCode::MalformedEnhancement);

  const auto& v = reply.value;
  return "Geometry: " + v["geometry"].get<std::string>() + "\nBoundaries: " + v["boundaries"].get<std::string>() +
         "\nSub-classes: " + join(string_list(v["sub_classes"]), ", ") + "\nSpectra: " + v["spectra"].get<std::string>();
}

PairProposal propose_ambiguous_pairs(const CategoryPool& pool, Gateway& gateway, const StageSettings& settings) {
  if (pool.size() < 2) fail(ErrorCode::PreconditionFailed, "pair proposal needs a pool of at least two categories");
  auto request = settings.make_request("propose_pairs");
  request.user_parts.push_back(TextPart{settings.prompts->render("propose_pairs", {{"pool", pool_listing(pool)}})});

  const auto reply = request_structured(
      gateway, settings, std::move(request),
      [](const json& v) -> std::optional<std::string> {
        if (!v.is_object() || !v.contains("pairs") || !v["pairs"].is_array()) return "expected {\"pairs\": [...]}";
        for (const auto& p : v["pairs"]) {
          if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
            return "each pair must be a two-element array of category names";
          }
        }
        return std::nullopt;
      },
      ErrorCode::MalformedPairs);

  PairProposal proposal;
  std::set<CategoryPair> seen;
  for (const auto& p : reply.value["pairs"]) {
    const auto a = normalize_name(p[0].get<std::string>());
    const auto b = normalize_name(p[1].get<std::string>());
    if (!pool.contains(a) || !pool.contains(b) || a == b) {
      proposal.warnings.push_back("dropped proposed pair (" + a + ", " + b + "): not two distinct pool categories");
      spdlog::warn("{}", proposal.warnings.back());
      continue;
    }
    auto pair = canonical_pair(pool, a, b);
    if (seen.insert(pair).second) proposal.pairs.push_back(std::move(pair));
  }
  return proposal;
}

DiscriminationRule discriminate_pair(const CategoryPair& pair,
                                     const std::map<std::string, std::string>& enhanced_descriptions,
                                     Gateway& gateway, const StageSettings& settings) {
  const auto& [a, b] = pair;
  auto ita = enhanced_descriptions.find(a);
  auto itb = enhanced_descriptions.find(b);
  if (ita == enhanced_descriptions.end() || itb == enhanced_descriptions.end() || ita->second.empty() ||
      itb->second.empty()) {
    fail(ErrorCode::PreconditionFailed, "pair (" + a + ", " + b + ") lacks enhanced descriptions");
  }
  auto request = settings.make_request("discriminate");
  request.user_parts.push_back(TextPart{settings.prompts->render(
      "discriminate",
      {{"category_a", a}, {"category_b", b}, {"description_a", ita->second}, {"description_b", itb->second}})});

  const auto reply = request_structured(
      gateway, settings, std::move(request),
      [&](const json& v) -> std::optional<std::string> {
        if (!v.is_object()) return "expected a JSON object";
        if (!non_empty_string(v, "rule")) return "field 'rule' missing or empty";
        if (!v.contains("decides_for") || !v["decides_for"].is_string()) return "field 'decides_for' missing";
        const auto winner = normalize_name(v["decides_for"].get<std::string>());
        if (winner != a && winner != b) {
          return "decides_for '" + winner + "' is neither '" + a + "' nor '" + b + "'";
        }
        if (v.contains("cue") && !v["cue"].is_string()) return "field 'cue' must be a string";
        return std::nullopt;
      },
      ErrorCode::MalformedRule);

  DiscriminationRule rule;
  rule.category_a = a;
  rule.category_b = b;
  rule.rule = reply.value["rule"].get<std::string>();
  rule.decides_for = normalize_name(reply.value["decides_for"].get<std::string>());
  rule.cue = reply.value.value("cue", std::string());
  return rule;
}

InterpretationStandard synthesize_standard(const Category& category, const DistillContext& context,
                                           Gateway& gateway, const StageSettings& settings) {
  auto it = context.enhanced_descriptions.find(category.name);
  if (it == context.enhanced_descriptions.end() || it->second.empty()) {
    fail(ErrorCode::PreconditionFailed, "category '" + category.name + "' has no enhanced description");
  }
  std::vector<DiscriminationRule> touching;
  for (const auto& r : context.discrimination_rules) {
    if (r.involves(category.name)) touching.push_back(r);
  }

  auto request = settings.make_request("synthesize_standard");
  request.user_parts.push_back(TextPart{settings.prompts->render(
      "synthesize_standard",
      {{"category", category.name}, {"description", it->second}, {"rules", describe_rules(touching)}})});

  const auto reply = request_structured(
      gateway, settings, std::move(request),
      [](const json& v) -> std::optional<std::string> {
        if (!v.is_object()) return "expected a JSON object";
        if (!non_empty_string(v, "morphology")) return "field 'morphology' missing or empty";
        if (!non_empty_string(v, "spectral_spatial")) return "field 'spectral_spatial' missing or empty";
        if (v.contains("exclusivity") && !v["exclusivity"].is_string()) return "field 'exclusivity' must be a string";
        return std::nullopt;
      },
      ErrorCode::MalformedStandard);

  const auto& v = reply.value;
  InterpretationStandard standard;
  standard.category = category.name;
  standard.morphology = v["morphology"].get<std::string>();
  standard.spectral_spatial = v["spectral_spatial"].get<std::string>();
  standard.exclusivity = v.value("exclusivity", std::string());
  standard.sub_classes = v.contains("sub_classes") ? string_list(v["sub_classes"]) : std::vector<std::string>{};
  standard.source = reply.backend == Backend::Mock ? StandardSource::Fixture : StandardSource::Mllm;

  // fold in rules the model left out of the exclusivity text
  const auto lowered = lowercase(standard.exclusivity);
  for (const auto& r : touching) {
    const auto& other = r.other(category.name);
    if (lowered.find(other) != std::string::npos) continue;
    if (!standard.exclusivity.empty()) standard.exclusivity += " ";
    standard.exclusivity += "Versus " + other + ": " + r.rule;
  }
  if (standard.exclusivity.empty()) {
    standard.exclusivity = "No pairwise exclusivity constraints were distilled for " + category.name +
                           "; it is exclusive of every other category by its morphology and spectra.";
  }
  return standard;
}

DistillResult build_standards(const CategoryPool& pool, Gateway& gateway, const DistillConfig& config) {
  require_valid(pool);
  const auto& settings = config.stage;
  DistillResult result;
  auto& context = result.context;

  // enhance
  std::vector<std::string> descriptions(pool.size());
  parallel_for(pool.size(), config.jobs, [&](std::size_t i) {
    try {
      descriptions[i] = enhance_category(pool[i], pool, gateway, settings);
    } catch (const Error& e) {
      throw tagged(e, "enhance", "category '" + pool[i].name + "'");
    }
  });
  for (std::size_t i = 0; i < pool.size(); ++i) context.enhanced_descriptions[pool[i].name] = descriptions[i];

  // pairs
  if (config.override_pairs) {
    for (const auto& [a, b] : *config.override_pairs) {
      auto pair = canonical_pair(pool, a, b);
      if (std::find(context.ambiguous_pairs.begin(), context.ambiguous_pairs.end(), pair) ==
          context.ambiguous_pairs.end()) {
        context.ambiguous_pairs.push_back(std::move(pair));
      }
    }
  } else if (pool.size() >= 2) {
    try {
      auto proposal = propose_ambiguous_pairs(pool, gateway, settings);
      context.ambiguous_pairs = std::move(proposal.pairs);
      result.warnings = std::move(proposal.warnings);
    } catch (const Error& e) {
      throw tagged(e, "propose_pairs", "pool");
    }
  }

  // discriminate
  std::vector<DiscriminationRule> rules(context.ambiguous_pairs.size());
  parallel_for(rules.size(), config.jobs, [&](std::size_t i) {
    const auto& pair = context.ambiguous_pairs[i];
    try {
      rules[i] = discriminate_pair(pair, context.enhanced_descriptions, gateway, settings);
    } catch (const Error& e) {
      throw tagged(e, "discriminate", "pair (" + pair.first + ", " + pair.second + ")");
    }
  });
  context.discrimination_rules = std::move(rules);

  // synthesize
  std::vector<InterpretationStandard> standards(pool.size());
  parallel_for(pool.size(), config.jobs, [&](std::size_t i) {
    try {
      standards[i] = synthesize_standard(pool[i], context, gateway, settings);
    } catch (const Error& e) {
      throw tagged(e, "synthesize", "category '" + pool[i].name + "'");
    }
  });

  auto& store = result.store;
  store.pool = pool;
  for (auto& s : standards) store.standards.emplace(s.category, std::move(s));
  store.rules = context.discrimination_rules;
  store.created_at = rfc3339_now();
  store.schema_version = kStandardsSchemaVersion;
  validate_store(store);
  return result;
}

std::vector<CategoryPair> load_pair_overrides(const std::filesystem::path& path, const CategoryPool& pool) {
  const auto doc = read_json_file(path);
  if (!doc.is_array()) fail(ErrorCode::InvalidDocument, path.string() + ": expected a JSON list of [name, name] pairs");
  std::vector<CategoryPair> pairs;
  for (const auto& p : doc) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
      fail(ErrorCode::InvalidDocument, path.string() + ": every entry must be a [name, name] pair");
    }
    pairs.push_back(canonical_pair(pool, p[0].get<std::string>(), p[1].get<std::string>()));
  }
  return pairs;
}

}  // namespace geovocab
