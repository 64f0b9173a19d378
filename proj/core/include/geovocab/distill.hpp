#pragma once

// Offline knowledge distillation: category enhancement, pairwise
// discrimination and standard synthesis, producing a StandardsStore.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geovocab/category.hpp"
#include "geovocab/gateway.hpp"
#include "geovocab/prompts.hpp"
#include "geovocab/standards.hpp"

namespace geovocab {

/// Unordered pair of pool names, stored in pool-index order.
using CategoryPair = std::pair<std::string, std::string>;

/// Priors handed to standard synthesis.
struct DistillContext {
  std::map<std::string, std::string> enhanced_descriptions;
  std::vector<DiscriminationRule> discrimination_rules;
  std::vector<CategoryPair> ambiguous_pairs;
};

struct PairProposal {
  std::vector<CategoryPair> pairs;
  std::vector<std::string> warnings;
};

struct DistillConfig {
  StageSettings stage;
  /// Explicit pair list; when set the pair-proposal call is skipped.
  std::optional<std::vector<CategoryPair>> override_pairs;
  int jobs = 4;
};

struct DistillResult {
  StandardsStore store;
  DistillContext context;
  std::vector<std::string> warnings;
};

/// Queries geometry, boundaries, sub-classes and spectra for one category and
/// returns them as a single description. Throws MalformedEnhancement.
std::string enhance_category(const Category& category, const CategoryPool& pool, Gateway& gateway,
                             const StageSettings& settings);

/// Model-proposed ambiguous pairs; out-of-pool or self pairs are dropped with a warning.
PairProposal propose_ambiguous_pairs(const CategoryPool& pool, Gateway& gateway, const StageSettings& settings);

/// Throws MalformedRule when decides_for is not one of the pair.
DiscriminationRule discriminate_pair(const CategoryPair& pair,
                                     const std::map<std::string, std::string>& enhanced_descriptions,
                                     Gateway& gateway, const StageSettings& settings);

/// Builds the standard for one category from the distillation context only.
/// Rules touching the category are folded into its exclusivity text.
InterpretationStandard synthesize_standard(const Category& category, const DistillContext& context,
                                           Gateway& gateway, const StageSettings& settings);

/// Runs enhance -> pairs -> discriminate -> synthesize over the whole pool.
/// Errors carry the stage name and the category or pair involved.
DistillResult build_standards(const CategoryPool& pool, Gateway& gateway, const DistillConfig& config);

/// Orders a pair by pool index; throws UnknownCategory / PreconditionFailed.
CategoryPair canonical_pair(const CategoryPool& pool, const std::string& a, const std::string& b);

/// Reads a JSON list of [name, name] pairs.
std::vector<CategoryPair> load_pair_overrides(const std::filesystem::path& path, const CategoryPool& pool);

}  // namespace geovocab
