#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "geovocab/category.hpp"
#include "geovocab/standards.hpp"
#include "geovocab/tensor.hpp"

namespace geovocab {

/// Rank-3 f4 tensor (H, W, D). Errors: RankMismatch, NonFiniteValue.
DenseFeatureMap load_feature_map(const std::filesystem::path& npy_path);
void save_feature_map(const DenseFeatureMap& features, const std::filesystem::path& npy_path);

/// Rank-2 f4 tensor (K, D) plus a sidecar naming the category of each row.
/// Rows are reordered into pool order. Errors: MissingCategoryRow,
/// UnknownSidecarCategory, RankMismatch.
TextEmbeddingSet load_text_embeddings(const std::filesystem::path& npy_path, const CategoryPool& pool,
                                      const std::filesystem::path& sidecar_path);
void save_text_embeddings(const TextEmbeddingSet& embeddings, const std::filesystem::path& npy_path,
                          const std::filesystem::path& sidecar_path);

/// Rank-2 u2 tensor. Errors: LabelOutOfRange.
LabelRaster load_label_raster(const std::filesystem::path& npy_path, const CategoryPool& pool);
void save_label_raster(const LabelRaster& raster, const std::filesystem::path& npy_path);
std::vector<std::uint8_t> encode_label_raster(const LabelRaster& raster);

nlohmann::json standards_to_json(const StandardsStore& store);
/// Strict: unknown fields are rejected. Errors: SchemaVersionMismatch, MissingStandard, InvalidDocument.
StandardsStore standards_from_json(const nlohmann::json& doc);
void save_standards(const StandardsStore& store, const std::filesystem::path& path);
StandardsStore load_standards(const std::filesystem::path& path);

}  // namespace geovocab
