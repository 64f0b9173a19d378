#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geovocab/category.hpp"

namespace geovocab {

/// Label value marking pixels excluded from evaluation.
inline constexpr std::uint16_t kIgnoreLabel = 65535;

/// Per-pixel visual embeddings, row-major (H, W, D).
class DenseFeatureMap {
 public:
  DenseFeatureMap() = default;
  /// Throws ShapeMismatch on bad dims and NonFiniteValue on NaN/Inf.
  DenseFeatureMap(std::size_t height, std::size_t width, std::size_t dim, std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> at(std::size_t y, std::size_t x) const {
    return std::span<const float>(data_).subspan((y * width_ + x) * dim_, dim_);
  }

  bool operator==(const DenseFeatureMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// One text embedding row per pool category, in pool order.
class TextEmbeddingSet {
 public:
  TextEmbeddingSet() = default;
  /// Validates the row count and, when `normalized` is set, unit row norms (1e-5).
  TextEmbeddingSet(CategoryPool pool, std::size_t dim, std::vector<float> data, bool normalized = false);

  const CategoryPool& pool() const noexcept { return pool_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return pool_.size(); }
  bool normalized() const noexcept { return normalized_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t index) const {
    return std::span<const float>(data_).subspan(index * dim_, dim_);
  }

  bool operator==(const TextEmbeddingSet&) const = default;

 private:
  CategoryPool pool_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  bool normalized_ = false;
};

/// Integer label map holding pool indices or kIgnoreLabel.
class LabelRaster {
 public:
  LabelRaster() = default;
  /// Throws LabelOutOfRange for any non-sentinel value >= num_classes.
  LabelRaster(std::size_t height, std::size_t width, std::vector<std::uint16_t> labels, std::size_t num_classes);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::span<const std::uint16_t> labels() const noexcept { return labels_; }
  std::uint16_t at(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }

  bool operator==(const LabelRaster&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<std::uint16_t> labels_;
};

/// Scales every row to unit L2 norm. Throws ZeroVectorRow for rows with norm < 1e-12.
TextEmbeddingSet l2_normalize_rows(const TextEmbeddingSet& embeddings);

}  // namespace geovocab
