#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geovocab/category.hpp"

namespace geovocab {

/// Suggested macro-scenario labels; the label set itself is open.
inline const std::vector<std::string>& seeded_scene_labels() {
  static const std::vector<std::string> labels{"urban", "rural", "industrial", "forest", "water-dominated", "mixed"};
  return labels;
}

struct SceneContext {
  std::string label;
  double confidence = 0.0;
  std::string rationale;

  bool operator==(const SceneContext&) const = default;
};

enum class AttributeKind { Geometry, Texture, Spectral, Object };

std::string_view to_string(AttributeKind kind);
/// Maps model-supplied kind strings onto the enum; unknown strings give nullopt.
std::optional<AttributeKind> attribute_kind_from_string(std::string_view text);

struct VisualAttribute {
  std::string description;
  AttributeKind kind = AttributeKind::Object;
  std::optional<std::string> region_hint;

  bool operator==(const VisualAttribute&) const = default;
};

struct VisualAttributeSet {
  std::vector<VisualAttribute> attributes;
  SceneContext scene;

  bool operator==(const VisualAttributeSet&) const = default;
};

enum class VerdictSource { Mllm, RuleEngine, Fallback };

std::string_view to_string(VerdictSource source);
VerdictSource verdict_source_from_string(std::string_view text);

struct CategoryVerdict {
  std::string category;
  bool present = false;
  std::string justification;
  VerdictSource decided_by = VerdictSource::Mllm;

  bool operator==(const CategoryVerdict&) const = default;
};

/// Verified per-image subset of the pool. `selected` always mirrors the
/// present verdicts in pool order.
class AdaptiveVocabulary {
 public:
  AdaptiveVocabulary() = default;

  /// Builds from one verdict per pool category (reordered to pool order).
  /// When no verdict is present every category is switched on, with
  /// decided_by = fallback, and fallback_used() reports true.
  static AdaptiveVocabulary from_verdicts(const CategoryPool& pool, std::vector<CategoryVerdict> verdicts);
  /// Vocabulary selecting the entire pool (used by the full-pool baseline).
  static AdaptiveVocabulary full_pool(const CategoryPool& pool);
  /// Rebuilds a vocabulary from serialized verdicts without re-applying the fallback policy.
  static AdaptiveVocabulary restore(const CategoryPool& pool, std::vector<CategoryVerdict> verdicts,
                                    bool fallback_used);

  const std::vector<CategoryVerdict>& verdicts() const noexcept { return verdicts_; }
  const std::vector<std::string>& selected() const noexcept { return selected_; }
  bool fallback_used() const noexcept { return fallback_used_; }

  bool operator==(const AdaptiveVocabulary&) const = default;

 private:
  static std::vector<CategoryVerdict> in_pool_order(const CategoryPool& pool, std::vector<CategoryVerdict> verdicts);
  void rebuild_selection();

  std::vector<CategoryVerdict> verdicts_;
  std::vector<std::string> selected_;
  bool fallback_used_ = false;
};

struct ImageRef {
  std::string uri;
  std::vector<std::uint8_t> bytes;
  std::string mime;
  std::string content_hash;

  bool has_payload() const noexcept { return !bytes.empty(); }
  /// File stem of the uri, used to pair images with features and rasters.
  std::string stem() const;

  bool operator==(const ImageRef&) const = default;
};

ImageRef image_from_bytes(std::string uri, std::vector<std::uint8_t> bytes, std::string mime = {});
ImageRef load_image(const std::filesystem::path& path);
std::string guess_mime(const std::filesystem::path& path);

}  // namespace geovocab
