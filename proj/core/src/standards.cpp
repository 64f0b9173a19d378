#include "geovocab/standards.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "geovocab/error.hpp"

namespace geovocab {

std::string_view to_string(StandardSource source) {
  switch (source) {
    case StandardSource::Mllm: return "mllm";
    case StandardSource::Fixture: return "fixture";
    case StandardSource::Manual: return "manual";
  }
  return "mllm";
}

StandardSource standard_source_from_string(std::string_view text) {
  if (text == "mllm") return StandardSource::Mllm;
  if (text == "fixture") return StandardSource::Fixture;
  if (text == "manual") return StandardSource::Manual;
  fail(ErrorCode::InvalidDocument, "unknown standard source '" + std::string(text) + "'");
}

const InterpretationStandard& StandardsStore::standard_for(std::string_view name) const {
  auto it = standards.find(std::string(name));
  if (it == standards.end()) fail(ErrorCode::MissingStandard, std::string(name));
  return it->second;
}

void validate_standard(const InterpretationStandard& s) {
  if (s.category.empty()) fail(ErrorCode::InvalidDocument, "standard without category name");
  if (s.morphology.empty() || s.spectral_spatial.empty() || s.exclusivity.empty()) {
    fail(ErrorCode::InvalidDocument,
         "standard '" + s.category + "' must have non-empty morphology, spectral_spatial and exclusivity");
  }
}

void validate_rule(const DiscriminationRule& r) {
  if (r.category_a == r.category_b) {
    fail(ErrorCode::InvalidDocument, "rule pairs '" + r.category_a + "' with itself");
  }
  if (r.decides_for != r.category_a && r.decides_for != r.category_b) {
    fail(ErrorCode::InvalidDocument, "rule (" + r.category_a + ", " + r.category_b + ") decides for '" +
                                         r.decides_for + "', which is not one of the pair");
  }
  if (r.rule.empty()) fail(ErrorCode::InvalidDocument, "rule (" + r.category_a + ", " + r.category_b + ") is empty");
}

void validate_store(const StandardsStore& store) {
  require_valid(store.pool);
  for (const auto& c : store.pool) {
    auto it = store.standards.find(c.name);
    if (it == store.standards.end()) fail(ErrorCode::MissingStandard, c.name);
    validate_standard(it->second);
  }
  for (const auto& [name, _] : store.standards) {
    if (!store.pool.contains(name)) fail(ErrorCode::UnknownCategory, "standard for '" + name + "' is not in the pool");
  }
  for (const auto& r : store.rules) {
    validate_rule(r);
    if (!store.pool.contains(r.category_a) || !store.pool.contains(r.category_b)) {
      fail(ErrorCode::UnknownCategory,
           "rule (" + r.category_a + ", " + r.category_b + ") references a category outside the pool");
    }
  }
}

std::string describe_rules(const std::vector<DiscriminationRule>& rules) {
  if (rules.empty()) return "(none)";
  std::string out;
  for (const auto& r : rules) {
    if (!out.empty()) out += "\n";
    out += "- " + r.category_a + " vs " + r.category_b + ": decides for " + r.decides_for;
    if (!r.cue.empty()) out += " when [" + r.cue + "]";
    out += ". " + r.rule;
  }
  return out;
}

std::string rfc3339_now() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(t));
}

}  // namespace geovocab
