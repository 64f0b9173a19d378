#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "geovocab/category.hpp"
#include "geovocab/reasoning_types.hpp"
#include "geovocab/tensor.hpp"
#include "test_util.hpp"

using namespace geovocab;

namespace {

TextEmbeddingSet single_row(std::vector<float> row) {
  const auto d = row.size();
  return TextEmbeddingSet(CategoryPool(std::vector<CategorySeed>{{"water", "Water"}}), d, std::move(row));
}

}  // namespace

TEST(CategoryPool, NamesAreLowercasedAndIndexedByPosition) {
  CategoryPool pool({{"Water", "Water"}, {"ROAD", "Road"}});
  EXPECT_EQ(pool[0].name, "water");
  EXPECT_EQ(pool[1].index, 1u);
  EXPECT_EQ(pool.require_index("road"), 1u);
  EXPECT_FALSE(pool.contains("forest"));
  EXPECT_GEO_ERROR(pool.require_index("forest"), ErrorCode::UnknownCategory);
}

TEST(CategoryPool, LovedaIsValid) {
  const auto pool = loveda_pool();
  EXPECT_EQ(pool.names(),
            (std::vector<std::string>{"agricultural", "background", "barren", "building", "forest", "road", "water"}));
  EXPECT_TRUE(validate_pool(pool).empty());
  EXPECT_TRUE(validate_pool(gid5_pool()).empty());
}

TEST(CategoryPool, DuplicateNameIsOneViolation) {
  CategoryPool pool({{"water", "Water"}, {"road", "Road"}, {"Water", "Water again"}});
  const auto v = validate_pool(pool);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("water"), std::string::npos);
  EXPECT_GEO_ERROR(require_valid(pool), ErrorCode::InvalidPool);
}

TEST(CategoryPool, EmptyPoolIsOneViolation) {
  EXPECT_EQ(validate_pool(CategoryPool{}).size(), 1u);
}

TEST(CategoryPool, JsonRoundTripKeepsIndices) {
  for (const auto& pool : {loveda_pool(), gid5_pool()}) {
    const auto back = pool_from_json(pool_to_json(pool));
    EXPECT_EQ(back, pool);
    for (const auto& c : pool) EXPECT_EQ(back.require_index(c.name), c.index);
  }
}

TEST(L2Normalize, PythagoreanRow) {
  const auto out = l2_normalize_rows(single_row({3.0f, 4.0f}));
  EXPECT_TRUE(out.normalized());
  EXPECT_NEAR(out.row(0)[0], 0.6f, 1e-7);
  EXPECT_NEAR(out.row(0)[1], 0.8f, 1e-7);
}

TEST(L2Normalize, UnitRowUnchanged) {
  const auto out = l2_normalize_rows(single_row({1.0f, 0.0f}));
  EXPECT_EQ(out.row(0)[0], 1.0f);
  EXPECT_EQ(out.row(0)[1], 0.0f);
}

TEST(L2Normalize, FourOnes) {
  const auto out = l2_normalize_rows(single_row({1.0f, 1.0f, 1.0f, 1.0f}));
  double sq = 0.0;
  for (int i = 0; i < 4; ++i) sq += 1.0;
  const double expected = 1.0 / std::sqrt(sq);
  for (float v : out.row(0)) EXPECT_NEAR(v, expected, 1e-7);
}

TEST(L2Normalize, ZeroRowRejected) {
  TextEmbeddingSet emb(CategoryPool(std::vector<CategorySeed>{{"a", "A"}, {"b", "B"}}), 2, {1.0f, 0.0f, 0.0f, 0.0f});
  try {
    l2_normalize_rows(emb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVectorRow);
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(L2Normalize, Idempotent) {
  std::mt19937 rng(11);
  std::normal_distribution<float> normal;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> data(5 * 9);
    for (auto& v : data) v = normal(rng) * 10.0f;
    TextEmbeddingSet emb(CategoryPool(std::vector<CategorySeed>{{"a", ""}, {"b", ""}, {"c", ""}, {"d", ""}, {"e", ""}}), 9, data);
    const auto once = l2_normalize_rows(emb);
    const auto twice = l2_normalize_rows(once);
    for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(once.data()[i], twice.data()[i], 1e-7);
    for (std::size_t r = 0; r < 5; ++r) {
      // direction preserved
      const auto src = emb.row(r);
      const auto dst = once.row(r);
      double dot = 0.0, n = 0.0;
      for (std::size_t k = 0; k < 9; ++k) {
        dot += static_cast<double>(src[k]) * dst[k];
        n += static_cast<double>(src[k]) * src[k];
      }
      EXPECT_NEAR(dot / std::sqrt(n), 1.0, 1e-6);
    }
  }
}

TEST(TextEmbeddingSet, RowCountMustMatchPool) {
  EXPECT_GEO_ERROR(TextEmbeddingSet(loveda_pool(), 2, std::vector<float>(6 * 2, 1.0f)), ErrorCode::ShapeMismatch);
}

TEST(LabelRaster, RejectsOutOfRangeButKeepsSentinel) {
  EXPECT_NO_THROW(LabelRaster(1, 2, {0, kIgnoreLabel}, 3));
  EXPECT_GEO_ERROR(LabelRaster(1, 2, {0, 3}, 3), ErrorCode::LabelOutOfRange);
}

TEST(AdaptiveVocabulary, SelectedMirrorsPresentVerdicts) {
  const auto pool = loveda_pool();
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CategoryVerdict> verdicts;
    for (const auto& c : pool) verdicts.push_back({c.name, (rng() & 1U) != 0, "", VerdictSource::Mllm});
    std::shuffle(verdicts.begin(), verdicts.end(), rng);
    const auto vocab = AdaptiveVocabulary::from_verdicts(pool, verdicts);
    std::vector<std::string> expected;
    for (const auto& v : vocab.verdicts()) {
      if (v.present) expected.push_back(v.category);
    }
    EXPECT_EQ(vocab.selected(), expected);
    for (std::size_t i = 0; i < pool.size(); ++i) EXPECT_EQ(vocab.verdicts()[i].category, pool[i].name);
  }
}

TEST(AdaptiveVocabulary, AllAbsentFallsBackToFullPool) {
  const auto pool = loveda_pool();
  std::vector<CategoryVerdict> verdicts;
  for (const auto& c : pool) verdicts.push_back({c.name, false, "no", VerdictSource::Mllm});
  const auto vocab = AdaptiveVocabulary::from_verdicts(pool, verdicts);
  EXPECT_TRUE(vocab.fallback_used());
  EXPECT_EQ(vocab.selected(), pool.names());
  for (const auto& v : vocab.verdicts()) EXPECT_EQ(v.decided_by, VerdictSource::Fallback);
  EXPECT_EQ(AdaptiveVocabulary::full_pool(pool).selected(), pool.names());
}
