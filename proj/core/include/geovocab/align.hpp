#pragma once

// Restricted argmax pixel-to-text alignment.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geovocab/reasoning_types.hpp"
#include "geovocab/tensor.hpp"

namespace geovocab {

enum class Similarity { Cosine, Dot };
enum class Upsample { None, Nearest };

std::string_view to_string(Similarity similarity);
Similarity similarity_from_string(std::string_view text);
std::string_view to_string(Upsample upsample);
Upsample upsample_from_string(std::string_view text);

/// Ties always break toward the lowest pool index.
struct AlignmentConfig {
  Similarity similarity = Similarity::Cosine;
  std::vector<std::string> always_include;
  Upsample upsample = Upsample::None;
  std::size_t target_height = 0;
  std::size_t target_width = 0;
  /// Row-level worker threads; output does not depend on it.
  int jobs = 1;

  /// Throws UnknownCategory when always_include names a category outside the pool.
  void validate(const CategoryPool& pool) const;
};

/// One score per candidate, in candidate order. Cosine mode normalizes both
/// vectors; a zero feature scores 0 everywhere.
std::vector<std::pair<std::size_t, double>> score_pixel(std::span<const float> feature,
                                                        const TextEmbeddingSet& embeddings,
                                                        std::span<const std::size_t> candidate_indices,
                                                        Similarity similarity = Similarity::Cosine);

/// Sorted pool indices of vocab.selected() plus cfg.always_include.
std::vector<std::size_t> candidate_set(const CategoryPool& pool, const AdaptiveVocabulary& vocab,
                                       const AlignmentConfig& cfg);

/// Per-pixel argmax over the candidate set; labels are global pool indices.
LabelRaster segment(const DenseFeatureMap& features, const TextEmbeddingSet& embeddings,
                    const AdaptiveVocabulary& vocab, const AlignmentConfig& cfg);

/// Same, with an explicit candidate index set (no upsampling).
LabelRaster segment_candidates(const DenseFeatureMap& features, const TextEmbeddingSet& embeddings,
                               std::span<const std::size_t> candidates, Similarity similarity, int jobs = 1);

/// Label at (y, x) = source at (floor(y*h/H), floor(x*w/W)). Throws ShrinkUnsupported.
LabelRaster upsample_nearest(const LabelRaster& raster, std::size_t target_height, std::size_t target_width);

}  // namespace geovocab
