#include "geovocab/tensor.hpp"

#include <cmath>
#include <string>

#include "geovocab/error.hpp"

namespace geovocab {

namespace {

double row_norm(std::span<const float> row) {
  double sum = 0.0;
  for (float v : row) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

}  // namespace

DenseFeatureMap::DenseFeatureMap(std::size_t height, std::size_t width, std::size_t dim, std::vector<float> data)
    : height_(height), width_(width), dim_(dim), data_(std::move(data)) {
  if (height_ == 0 || width_ == 0 || dim_ == 0) {
    fail(ErrorCode::ShapeMismatch, "feature map dims must be >= 1");
  }
  if (data_.size() != height_ * width_ * dim_) {
    fail(ErrorCode::ShapeMismatch, "feature map holds " + std::to_string(data_.size()) + " values, expected " +
                                       std::to_string(height_ * width_ * dim_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) fail(ErrorCode::NonFiniteValue, "feature value at flat index " + std::to_string(i));
  }
}

TextEmbeddingSet::TextEmbeddingSet(CategoryPool pool, std::size_t dim, std::vector<float> data, bool normalized)
    : pool_(std::move(pool)), dim_(dim), data_(std::move(data)), normalized_(normalized) {
  if (dim_ == 0) fail(ErrorCode::ShapeMismatch, "embedding dim must be >= 1");
  if (data_.size() != pool_.size() * dim_) {
    fail(ErrorCode::ShapeMismatch, "embedding set holds " + std::to_string(data_.size()) + " values, expected " +
                                       std::to_string(pool_.size()) + " rows of " + std::to_string(dim_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) fail(ErrorCode::NonFiniteValue, "embedding value at flat index " + std::to_string(i));
  }
  if (normalized_) {
    for (std::size_t r = 0; r < pool_.size(); ++r) {
      if (std::abs(row_norm(row(r)) - 1.0) > 1e-5) {
        fail(ErrorCode::PreconditionFailed, "embedding row " + std::to_string(r) + " flagged normalized but norm != 1");
      }
    }
  }
}

LabelRaster::LabelRaster(std::size_t height, std::size_t width, std::vector<std::uint16_t> labels,
                         std::size_t num_classes)
    : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
  if (labels_.size() != height_ * width_) {
    fail(ErrorCode::ShapeMismatch, "raster holds " + std::to_string(labels_.size()) + " labels, expected " +
                                       std::to_string(height_ * width_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto v = labels_[i];
    if (v != kIgnoreLabel && v >= num_classes_) {
      fail(ErrorCode::LabelOutOfRange, "value " + std::to_string(v) + " at (" + std::to_string(i / width_) + ", " +
                                           std::to_string(i % width_) + ") with " + std::to_string(num_classes_) +
                                           " classes");
    }
  }
}

TextEmbeddingSet l2_normalize_rows(const TextEmbeddingSet& embeddings) {
  const auto dim = embeddings.dim();
  std::vector<float> out(embeddings.data().begin(), embeddings.data().end());
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    const double norm = row_norm(embeddings.row(r));
    if (norm < 1e-12) fail(ErrorCode::ZeroVectorRow, "row " + std::to_string(r));
    for (std::size_t k = 0; k < dim; ++k) {
      out[r * dim + k] = static_cast<float>(static_cast<double>(out[r * dim + k]) / norm);
    }
  }
  return TextEmbeddingSet(embeddings.pool(), dim, std::move(out), true);
}

}  // namespace geovocab
