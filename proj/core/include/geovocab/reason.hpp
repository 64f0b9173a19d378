#pragma once

// Online instance reasoning: scene anchoring, attribute decoupling and
// knowledge-driven verification producing the per-image vocabulary.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geovocab/gateway.hpp"
#include "geovocab/prompts.hpp"
#include "geovocab/reasoning_types.hpp"
#include "geovocab/standards.hpp"

namespace geovocab {

/// Side record of one reasoning stage.
struct StageLog {
  std::string prompt;
  std::string raw_response;
  int rounds = 0;
  std::vector<std::string> warnings;
};

struct ReasoningTrace {
  ImageRef image;  // bytes are not serialized
  SceneContext scene;
  VisualAttributeSet attributes;
  AdaptiveVocabulary vocabulary;
  std::map<std::string, std::int64_t> stage_timings_ms;
  std::map<std::string, std::string> raw_responses;
  std::map<std::string, std::string> prompts;
  std::vector<std::string> warnings;
};

/// Throws PreconditionFailed without an image payload, MalformedScene on bad replies.
SceneContext anchor_scene(const ImageRef& image, Gateway& gateway, const StageSettings& settings,
                          StageLog* log = nullptr);

/// Throws MalformedAttributes, or EmptyAttributeSet when the model keeps returning none.
VisualAttributeSet decouple_attributes(const ImageRef& image, const SceneContext& scene, Gateway& gateway,
                                       const StageSettings& settings, StageLog* log = nullptr);

/// One verdict per pool category. Categories the model omits are decided by
/// rule_fallback_verify. The image is attached to the request as well.
AdaptiveVocabulary synthesize_vocabulary(const ImageRef& image, const SceneContext& scene,
                                         const VisualAttributeSet& attributes, const StandardsStore& store,
                                         Gateway& gateway, const StageSettings& settings, StageLog* log = nullptr);

/// Deterministic keyword verification against the category's standard and rules.
CategoryVerdict rule_fallback_verify(const std::string& category, const SceneContext& scene,
                                     const VisualAttributeSet& attributes, const StandardsStore& store);

/// Lowercased content tokens with stop-words removed and plurals folded.
std::set<std::string> keyword_set(std::string_view text);

/// anchor -> decouple -> synthesize; errors name the failing stage.
ReasoningTrace run_chain(const ImageRef& image, const StandardsStore& store, Gateway& gateway,
                         const StageSettings& settings);

nlohmann::json trace_to_json(const ReasoningTrace& trace, bool include_timings = false);
ReasoningTrace trace_from_json(const nlohmann::json& doc, const CategoryPool& pool);
std::filesystem::path trace_file_name(const ReasoningTrace& trace);
void save_trace(const ReasoningTrace& trace, const std::filesystem::path& path);
ReasoningTrace load_trace(const std::filesystem::path& path, const CategoryPool& pool);

}  // namespace geovocab
