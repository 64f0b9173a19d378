#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "geovocab/category.hpp"

namespace geovocab {

enum class StandardSource { Mllm, Fixture, Manual };

std::string_view to_string(StandardSource source);
StandardSource standard_source_from_string(std::string_view text);

/// Multi-dimensional interpretation standard for one category.
struct InterpretationStandard {
  std::string category;
  std::string morphology;
  std::string spectral_spatial;
  std::string exclusivity;
  std::vector<std::string> sub_classes;
  StandardSource source = StandardSource::Mllm;

  bool operator==(const InterpretationStandard&) const = default;
};

/// Pairwise criterion separating two easily confused categories. Evidence
/// matching `cue` is assigned to `decides_for` rather than the other member.
struct DiscriminationRule {
  std::string category_a;
  std::string category_b;
  std::string rule;
  std::string decides_for;
  std::string cue;

  bool involves(std::string_view name) const { return category_a == name || category_b == name; }
  /// True when the rule involves `name` and assigns contested evidence to the other member.
  bool decides_against(std::string_view name) const { return involves(name) && decides_for != name; }
  const std::string& other(std::string_view name) const { return category_a == name ? category_b : category_a; }

  bool operator==(const DiscriminationRule&) const = default;
};

inline constexpr int kStandardsSchemaVersion = 1;

struct StandardsStore {
  CategoryPool pool;
  std::map<std::string, InterpretationStandard> standards;
  std::vector<DiscriminationRule> rules;
  std::string created_at;  // RFC 3339, UTC
  int schema_version = kStandardsSchemaVersion;

  /// Throws MissingStandard when absent.
  const InterpretationStandard& standard_for(std::string_view name) const;

  bool operator==(const StandardsStore&) const = default;
};

/// Checks standard and rule invariants; throws MissingStandard or InvalidDocument.
void validate_standard(const InterpretationStandard& standard);
void validate_rule(const DiscriminationRule& rule);
void validate_store(const StandardsStore& store);

/// One bullet line per rule, or "(none)".
std::string describe_rules(const std::vector<DiscriminationRule>& rules);

/// Current UTC time in RFC 3339, honouring SOURCE_DATE_EPOCH when set.
std::string rfc3339_now();

}  // namespace geovocab
