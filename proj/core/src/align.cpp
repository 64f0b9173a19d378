#include "geovocab/align.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "geovocab/error.hpp"
#include "geovocab/parallel.hpp"

namespace geovocab {

std::string_view to_string(Similarity similarity) { return similarity == Similarity::Cosine ? "cosine" : "dot"; }

Similarity similarity_from_string(std::string_view text) {
  if (text == "cosine") return Similarity::Cosine;
  if (text == "dot") return Similarity::Dot;
  fail(ErrorCode::ConfigError, "unknown similarity '" + std::string(text) + "' (expected cosine or dot)");
}

std::string_view to_string(Upsample upsample) { return upsample == Upsample::None ? "none" : "nearest"; }

Upsample upsample_from_string(std::string_view text) {
  if (text == "none") return Upsample::None;
  if (text == "nearest") return Upsample::Nearest;
  fail(ErrorCode::ConfigError, "unknown upsample mode '" + std::string(text) + "' (expected none or nearest)");
}

void AlignmentConfig::validate(const CategoryPool& pool) const {
  for (const auto& name : always_include) {
    if (!pool.contains(normalize_name(name))) {
      fail(ErrorCode::UnknownCategory, "always_include names '" + name + "', which is not in the pool");
    }
  }
  if (upsample == Upsample::Nearest && (target_height == 0 || target_width == 0)) {
    fail(ErrorCode::ConfigError, "nearest upsampling needs a target size");
  }
}

namespace {

struct Scorer {
  const TextEmbeddingSet& embeddings;
  std::vector<std::size_t> candidates;
  Similarity similarity;
  std::vector<double> rows;  // candidate rows in double, unit norm in cosine mode

  Scorer(const TextEmbeddingSet& emb, std::span<const std::size_t> cands, Similarity sim)
      : embeddings(emb), candidates(cands.begin(), cands.end()), similarity(sim) {
    if (candidates.empty()) fail(ErrorCode::EmptyCandidates, "candidate set is empty");
    const auto d = emb.dim();
    rows.resize(candidates.size() * d);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (candidates[c] >= emb.rows()) {
        fail(ErrorCode::UnknownCategory, "candidate index " + std::to_string(candidates[c]) + " outside the pool");
      }
      const auto row = emb.row(candidates[c]);
      double norm = 1.0;
      if (sim == Similarity::Cosine) {
        double sq = 0.0;
        for (float v : row) sq += static_cast<double>(v) * v;
        norm = std::sqrt(sq);
      }
      for (std::size_t k = 0; k < d; ++k) rows[c * d + k] = norm > 0.0 ? row[k] / norm : 0.0;
    }
  }

  void check_dim(std::size_t dim) const {
    if (dim != embeddings.dim()) {
      fail(ErrorCode::DimMismatch, "feature dim " + std::to_string(dim) + " != embedding dim " +
                                       std::to_string(embeddings.dim()));
    }
  }

  template <typename Visit>
  void score(std::span<const float> feature, Visit&& visit) const {
    const auto d = embeddings.dim();
    double scale = 1.0;
    if (similarity == Similarity::Cosine) {
      double sq = 0.0;
      for (float v : feature) sq += static_cast<double>(v) * v;
      scale = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    }
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double dot = 0.0;
      const double* row = rows.data() + c * d;
      for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(feature[k]) * row[k];
      visit(candidates[c], dot * scale);
    }
  }

  std::size_t argmax(std::span<const float> feature) const {
    std::size_t best = candidates.front();
    double best_score = -INFINITY;
    score(feature, [&](std::size_t index, double s) {
      if (s > best_score || (s == best_score && index < best)) {
        best = index;
        best_score = s;
      }
    });
    return best;
  }
};

}  // namespace

std::vector<std::pair<std::size_t, double>> score_pixel(std::span<const float> feature,
                                                        const TextEmbeddingSet& embeddings,
                                                        std::span<const std::size_t> candidate_indices,
                                                        Similarity similarity) {
  const Scorer scorer(embeddings, candidate_indices, similarity);
  scorer.check_dim(feature.size());
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(candidate_indices.size());
  scorer.score(feature, [&](std::size_t index, double s) { out.emplace_back(index, s); });
  return out;
}

std::vector<std::size_t> candidate_set(const CategoryPool& pool, const AdaptiveVocabulary& vocab,
                                       const AlignmentConfig& cfg) {
  std::set<std::size_t> indices;
  for (const auto& name : vocab.selected()) indices.insert(pool.require_index(name));
  for (const auto& name : cfg.always_include) indices.insert(pool.require_index(normalize_name(name)));
  return {indices.begin(), indices.end()};
}

LabelRaster segment_candidates(const DenseFeatureMap& features, const TextEmbeddingSet& embeddings,
                               std::span<const std::size_t> candidates, Similarity similarity, int jobs) {
  std::vector<std::size_t> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  const Scorer scorer(embeddings, sorted, similarity);
  scorer.check_dim(features.dim());

  const auto h = features.height();
  const auto w = features.width();
  std::vector<std::uint16_t> labels(h * w);
  parallel_for(h, jobs, [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) labels[y * w + x] = static_cast<std::uint16_t>(scorer.argmax(features.at(y, x)));
  });
  return LabelRaster(h, w, std::move(labels), embeddings.rows());
}

LabelRaster segment(const DenseFeatureMap& features, const TextEmbeddingSet& embeddings,
                    const AdaptiveVocabulary& vocab, const AlignmentConfig& cfg) {
  const auto& pool = embeddings.pool();
  cfg.validate(pool);
  const auto candidates = candidate_set(pool, vocab, cfg);
  if (candidates.empty()) fail(ErrorCode::EmptyCandidates, "vocabulary and always_include are both empty");
  auto raster = segment_candidates(features, embeddings, candidates, cfg.similarity, cfg.jobs);
  if (cfg.upsample == Upsample::Nearest) raster = upsample_nearest(raster, cfg.target_height, cfg.target_width);
  return raster;
}

LabelRaster upsample_nearest(const LabelRaster& raster, std::size_t target_height, std::size_t target_width) {
  const auto h = raster.height();
  const auto w = raster.width();
  if (target_height < h || target_width < w) {
    fail(ErrorCode::ShrinkUnsupported, "cannot resample " + std::to_string(h) + "x" + std::to_string(w) + " to " +
                                           std::to_string(target_height) + "x" + std::to_string(target_width));
  }
  std::vector<std::uint16_t> labels(target_height * target_width);
  for (std::size_t y = 0; y < target_height; ++y) {
    const auto sy = y * h / target_height;
    for (std::size_t x = 0; x < target_width; ++x) labels[y * target_width + x] = raster.at(sy, x * w / target_width);
  }
  return LabelRaster(target_height, target_width, std::move(labels), raster.num_classes());
}

}  // namespace geovocab
