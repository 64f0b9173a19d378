#include "geovocab/reasoning_types.hpp"

#include <algorithm>

#include "geovocab/digest.hpp"
#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"

namespace geovocab {

std::string_view to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::Geometry: return "geometry";
    case AttributeKind::Texture: return "texture";
    case AttributeKind::Spectral: return "spectral";
    case AttributeKind::Object: return "object";
  }
  return "object";
}

std::optional<AttributeKind> attribute_kind_from_string(std::string_view text) {
  const auto key = normalize_name(text);
  if (key == "geometry" || key == "geometric" || key == "shape" || key == "morphology") return AttributeKind::Geometry;
  if (key == "texture" || key == "textural") return AttributeKind::Texture;
  if (key == "spectral" || key == "spectrum" || key == "color" || key == "colour" || key == "reflectance") {
    return AttributeKind::Spectral;
  }
  if (key == "object" || key == "category" || key == "fine-grained") return AttributeKind::Object;
  return std::nullopt;
}

std::string_view to_string(VerdictSource source) {
  switch (source) {
    case VerdictSource::Mllm: return "mllm";
    case VerdictSource::RuleEngine: return "rule_engine";
    case VerdictSource::Fallback: return "fallback";
  }
  return "mllm";
}

VerdictSource verdict_source_from_string(std::string_view text) {
  if (text == "mllm") return VerdictSource::Mllm;
  if (text == "rule_engine") return VerdictSource::RuleEngine;
  if (text == "fallback") return VerdictSource::Fallback;
  fail(ErrorCode::InvalidDocument, "unknown verdict source '" + std::string(text) + "'");
}

std::vector<CategoryVerdict> AdaptiveVocabulary::in_pool_order(const CategoryPool& pool,
                                                               std::vector<CategoryVerdict> verdicts) {
  std::vector<std::optional<CategoryVerdict>> slots(pool.size());
  for (auto& v : verdicts) {
    const auto idx = pool.require_index(v.category);
    if (slots[idx]) fail(ErrorCode::InvalidDocument, "duplicate verdict for '" + v.category + "'");
    v.category = pool[idx].name;
    slots[idx] = std::move(v);
  }
  std::vector<CategoryVerdict> ordered;
  ordered.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) fail(ErrorCode::MissingCategoryRow, "no verdict for category '" + pool[i].name + "'");
    ordered.push_back(std::move(*slots[i]));
  }
  return ordered;
}

void AdaptiveVocabulary::rebuild_selection() {
  selected_.clear();
  for (auto& v : verdicts_) {
    if (v.present && v.justification.empty()) v.justification = "marked present without justification";
    if (v.present) selected_.push_back(v.category);
  }
}

AdaptiveVocabulary AdaptiveVocabulary::from_verdicts(const CategoryPool& pool, std::vector<CategoryVerdict> verdicts) {
  AdaptiveVocabulary vocab;
  vocab.verdicts_ = in_pool_order(pool, std::move(verdicts));
  const bool any_present =
      std::any_of(vocab.verdicts_.begin(), vocab.verdicts_.end(), [](const auto& v) { return v.present; });
  if (!any_present) {
    vocab.fallback_used_ = true;
    for (auto& v : vocab.verdicts_) {
      v.present = true;
      v.decided_by = VerdictSource::Fallback;
      v.justification = "no category verified present; falling back to the full pool";
    }
  }
  vocab.rebuild_selection();
  return vocab;
}

AdaptiveVocabulary AdaptiveVocabulary::restore(const CategoryPool& pool, std::vector<CategoryVerdict> verdicts,
                                               bool fallback_used) {
  AdaptiveVocabulary vocab;
  vocab.verdicts_ = in_pool_order(pool, std::move(verdicts));
  vocab.fallback_used_ = fallback_used;
  vocab.rebuild_selection();
  if (vocab.selected_.empty()) fail(ErrorCode::InvalidDocument, "vocabulary selects no category");
  return vocab;
}

AdaptiveVocabulary AdaptiveVocabulary::full_pool(const CategoryPool& pool) {
  AdaptiveVocabulary vocab;
  for (const auto& c : pool) {
    vocab.verdicts_.push_back({c.name, true, "full-pool vocabulary", VerdictSource::Fallback});
    vocab.selected_.push_back(c.name);
  }
  return vocab;
}

std::string ImageRef::stem() const { return std::filesystem::path(uri).stem().string(); }

std::string guess_mime(const std::filesystem::path& path) {
  auto ext = normalize_name(path.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".webp") return "image/webp";
  if (ext == ".ppm") return "image/x-portable-pixmap";
  return "application/octet-stream";
}

ImageRef image_from_bytes(std::string uri, std::vector<std::uint8_t> bytes, std::string mime) {
  ImageRef ref;
  ref.content_hash = sha256_hex(bytes);
  ref.mime = mime.empty() ? guess_mime(uri) : std::move(mime);
  ref.uri = std::move(uri);
  ref.bytes = std::move(bytes);
  return ref;
}

ImageRef load_image(const std::filesystem::path& path) {
  return image_from_bytes(path.string(), read_file_bytes(path));
}

}  // namespace geovocab
