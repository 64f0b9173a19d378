#include <gtest/gtest.h>

#include "corpus.hpp"
#include "geovocab/cli/commands.hpp"
#include "geovocab/file_util.hpp"
#include "geovocab/npy.hpp"
#include "geovocab/tensor_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace geovocab;
using namespace geovocab::cli;
namespace fs = std::filesystem;
using geovocab::testing::TempDir;
using nlohmann::json;

namespace {

class CorpusTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    layout_ = new geovocab::testing::CorpusLayout(geovocab::testing::write_corpus(dir_->path() / "corpus"));
  }
  static void TearDownTestSuite() {
    delete layout_;
    delete dir_;
  }

  static CommonOptions common() {
    CommonOptions c;
    c.gateway.mock_fixture_dir = layout_->fixtures_dir;
    c.jobs = 2;
    return c;
  }

  static fs::path scratch(const std::string& name) {
    const auto p = dir_->path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }

  static inline TempDir* dir_ = nullptr;
  static inline geovocab::testing::CorpusLayout* layout_ = nullptr;
};

std::set<std::string> selected_set(const ReasoningTrace& t) {
  return {t.vocabulary.selected().begin(), t.vocabulary.selected().end()};
}

}  // namespace

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(Error(ErrorCode::LabelOutOfRange, "")), 1);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::FixtureMissing, "")), 1);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::RateLimited, "")), 2);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::AuthError, "")), 2);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::ConfigError, "")), 3);
}

TEST(ResolvePool, BuiltInsAndFiles) {
  EXPECT_EQ(resolve_pool("loveda"), loveda_pool());
  EXPECT_EQ(resolve_pool("GID5"), gid5_pool());
  EXPECT_GEO_ERROR(resolve_pool("potsdam"), ErrorCode::ConfigError);
  TempDir dir("pool");
  write_json_file(dir / "p.json", pool_to_json(gid5_pool()));
  EXPECT_EQ(resolve_pool((dir / "p.json").string()), gid5_pool());
}

TEST(PipelineConfigTest, RejectsUnknownKeys) {
  EXPECT_GEO_ERROR(PipelineConfig::from_json(json{{"pool", "loveda"}, {"colour", 1}}, "/"), ErrorCode::ConfigError);
  EXPECT_GEO_ERROR(mode_from_string("gr-cot-plus"), ErrorCode::ConfigError);
  EXPECT_EQ(mode_from_string("gr_cot"), Mode::GrCot);
}

TEST_F(CorpusTest, DistillWritesSevenStandards) {
  DistillOptions o{common(), scratch("distill") / "standards.json", std::nullopt};
  const auto outcome = cmd_distill(o);
  EXPECT_EQ(outcome.store.standards.size(), 7u);
  EXPECT_EQ(load_standards(o.out).standards.size(), 7u);
  EXPECT_EQ(outcome.calls_by_schema.at("propose_pairs"), 1);
  auto reference = load_standards(layout_->standards);
  reference.created_at = outcome.store.created_at;
  EXPECT_EQ(outcome.store, reference);
}

TEST_F(CorpusTest, DistillWithPairsSkipsProposal) {
  DistillOptions o{common(), scratch("distill_pairs") / "standards.json", layout_->pairs};
  const auto outcome = cmd_distill(o);
  EXPECT_EQ(outcome.calls_by_schema.count("propose_pairs"), 0u);
  EXPECT_EQ(outcome.store.rules.size(), 2u);
}

TEST_F(CorpusTest, DistillMissingFixtureNamesPair) {
  const auto fixtures = scratch("partial_fixtures");
  for (const auto& e : fs::directory_iterator(layout_->fixtures_dir)) fs::copy(e.path(), fixtures / e.path().filename());
  // drop the discrimination reply for (agricultural, barren)
  bool removed = false;
  for (const auto& e : fs::directory_iterator(fixtures)) {
    const auto name = e.path().filename().string();
    if (name.rfind("discriminate__", 0) != 0) continue;
    if (read_text_file(e.path()).find("messy surface textures") != std::string::npos) {
      fs::remove(e.path());
      removed = true;
      break;
    }
  }
  ASSERT_TRUE(removed);
  auto c = common();
  c.gateway.mock_fixture_dir = fixtures;
  try {
    cmd_distill({c, scratch("distill_missing") / "s.json", std::nullopt});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(exit_code_for(e), 1);
    EXPECT_EQ(e.code(), ErrorCode::FixtureMissing);
    EXPECT_NE(std::string(e.what()).find("agricultural, barren"), std::string::npos) << e.what();
  }
}

TEST_F(CorpusTest, ReasonWritesTraces) {
  const auto out = scratch("reason");
  std::vector<fs::path> inputs;
  for (const char* stem : {"rural_greenhouse", "urban_shadows", "lakeside"}) {
    inputs.push_back(layout_->images_dir / (std::string(stem) + ".ppm"));
  }
  const auto outcome = cmd_reason({common(), inputs, layout_->standards, out, false});
  ASSERT_EQ(outcome.traces.size(), 3u);
  EXPECT_TRUE(outcome.failures.empty());
  EXPECT_FALSE(fs::exists(out / "failures.json"));
  std::size_t fallbacks = 0;
  for (const auto& p : outcome.traces) {
    const auto t = load_trace(p, loveda_pool());
    fallbacks += t.vocabulary.fallback_used();
  }
  EXPECT_EQ(fallbacks, 1u);
}

TEST_F(CorpusTest, ReasonKeepGoingRecordsFailures) {
  const auto imgs = scratch("reason_imgs");
  fs::copy(layout_->images_dir / "lakeside.ppm", imgs / "lakeside.ppm");
  auto bytes = read_file_bytes(layout_->images_dir / "bare_fields.ppm");
  bytes.back() ^= 0xff;
  write_file_atomic(imgs / "altered.ppm", std::span<const std::uint8_t>(bytes));

  const auto out = scratch("reason_keep");
  const auto outcome = cmd_reason({common(), {imgs}, layout_->standards, out, true});
  EXPECT_EQ(outcome.traces.size(), 1u);
  ASSERT_EQ(outcome.failures.size(), 1u);
  EXPECT_EQ(outcome.failures[0].stage, "anchor");
  EXPECT_EQ(outcome.failures[0].code, ErrorCode::FixtureMissing);
  const auto doc = read_json_file(out / "failures.json");
  EXPECT_EQ(doc["failures"].size(), 1u);

  EXPECT_GEO_ERROR(cmd_reason({common(), {imgs}, layout_->standards, scratch("reason_stop"), false}),
                   ErrorCode::FixtureMissing);
}

TEST_F(CorpusTest, SegmentWithTraceVocabulary) {
  const auto out = scratch("segment");
  // a trace whose vocabulary is {water} only
  const auto pool = loveda_pool();
  ReasoningTrace trace;
  trace.image = load_image(layout_->images_dir / "lakeside.ppm");
  std::vector<CategoryVerdict> verdicts;
  for (const auto& c : pool) verdicts.push_back({c.name, c.name == "water", "", VerdictSource::Mllm});
  trace.vocabulary = AdaptiveVocabulary::from_verdicts(pool, verdicts);
  save_trace(trace, out / "t.trace.json");

  SegmentOptions o;
  o.features = layout_->features_dir / "lakeside.npy";
  o.embeddings = layout_->embeddings;
  o.sidecar = layout_->sidecar;
  o.trace = out / "t.trace.json";
  o.out = out / "pred.npy";
  const auto raster = cmd_segment(o);
  for (auto v : raster.labels()) EXPECT_EQ(v, pool.require_index("water"));
  EXPECT_EQ(load_label_raster(o.out, pool), raster);

  o.full_pool = true;
  EXPECT_GEO_ERROR(cmd_segment(o), ErrorCode::ConfigError);
  o.trace.reset();
  o.full_pool = false;
  EXPECT_GEO_ERROR(cmd_segment(o), ErrorCode::ConfigError);
}

TEST_F(CorpusTest, FullPoolMatchesExplicitAllVocabulary) {
  const auto out = scratch("segment_full");
  SegmentOptions o;
  o.features = layout_->features_dir / "urban_shadows.npy";
  o.embeddings = layout_->embeddings;
  o.sidecar = layout_->sidecar;
  o.full_pool = true;
  o.out = out / "full.npy";
  const auto full = cmd_segment(o);

  const auto emb = load_text_embeddings(layout_->embeddings, loveda_pool(), layout_->sidecar);
  const auto fm = load_feature_map(o.features);
  std::set<std::size_t> all{0, 1, 2, 3, 4, 5, 6};
  const auto want = geovocab::testing::brute_force_segment(fm, emb, all, Similarity::Cosine);
  EXPECT_EQ(std::vector<std::uint16_t>(full.labels().begin(), full.labels().end()), want);
}

TEST_F(CorpusTest, DotAndCosineDifferOnScaledEmbeddings) {
  const auto out = scratch("segment_dot");
  const auto pool = loveda_pool();
  auto rows = geovocab::testing::corpus_embeddings();
  const auto d = geovocab::testing::kEmbeddingDim;
  const auto water = pool.require_index("water");
  const auto building = pool.require_index("building");
  for (std::size_t k = 0; k < d; ++k) rows[building * d + k] *= 3.0f;
  save_text_embeddings(TextEmbeddingSet(pool, d, rows), out / "e.npy", out / "e.json");

  std::vector<float> f(d);
  const auto unit = geovocab::testing::corpus_embeddings();
  for (std::size_t k = 0; k < d; ++k) f[k] = 0.6f * unit[water * d + k] + 0.5f * unit[building * d + k];
  save_feature_map(DenseFeatureMap(1, 1, d, f), out / "f.npy");

  SegmentOptions o;
  o.features = out / "f.npy";
  o.embeddings = out / "e.npy";
  o.sidecar = out / "e.json";
  o.full_pool = true;
  o.out = out / "p.npy";
  EXPECT_EQ(cmd_segment(o).at(0, 0), water);
  o.alignment.similarity = Similarity::Dot;
  EXPECT_EQ(cmd_segment(o).at(0, 0), building);
}

TEST_F(CorpusTest, EvalPerfectPrediction) {
  const auto preds = scratch("eval");
  const auto pool = loveda_pool();
  for (const auto& e : fs::directory_iterator(layout_->gt_dir)) {
    const auto gt = load_label_raster(e.path(), pool);
    std::vector<std::uint16_t> labels(gt.labels().begin(), gt.labels().end());
    for (auto& v : labels)
      if (v == kIgnoreLabel) v = 0;
    save_label_raster(LabelRaster(gt.height(), gt.width(), labels, gt.num_classes()), preds / e.path().filename());
  }
  EvalOptions o;
  o.pred_dir = preds;
  o.gt_dir = layout_->gt_dir;
  const auto outcome = cmd_eval(o);
  EXPECT_EQ(outcome.report.miou, 1.0);
  EXPECT_EQ(outcome.report.oa, 1.0);
  EXPECT_NE(outcome.rendered.find("100.00"), std::string::npos);
  EXPECT_EQ(outcome.report.images_evaluated, 6u);
  EXPECT_EQ(outcome.report.ignored_pixels, 16u);
}

TEST_F(CorpusTest, EvalUnmatchedPair) {
  const auto preds = scratch("eval_unmatched");
  fs::copy(layout_->gt_dir / "lakeside.npy", preds / "lakeside.npy");
  EvalOptions o;
  o.pred_dir = preds;
  o.gt_dir = layout_->gt_dir;
  EXPECT_GEO_ERROR(cmd_eval(o), ErrorCode::UnmatchedPair);
}

TEST_F(CorpusTest, PipelineModes) {
  std::map<Mode, PipelineOutcome> outcomes;
  for (auto mode : {Mode::FullPoolBaseline, Mode::MllmDescriptionsOnly, Mode::GrCot}) {
    auto cfg = PipelineConfig::load(layout_->config(std::string(to_string(mode))));
    cfg.output_dir = scratch(std::string("pipe_") + std::string(to_string(mode)));
    outcomes[mode] = cmd_pipeline(cfg);
    ASSERT_TRUE(outcomes[mode].report.has_value());
    EXPECT_TRUE(fs::exists(cfg.output_dir / "manifest.json"));
    EXPECT_TRUE(fs::exists(cfg.output_dir / "report.txt"));
  }
  const auto& base = *outcomes[Mode::FullPoolBaseline].report;
  const auto& grcot = *outcomes[Mode::GrCot].report;

  double expected_gr = 0.0, expected_base = 0.0;
  const auto names = loveda_pool().names();
  const std::set<std::string> pool_set(names.begin(), names.end());
  for (const auto& img : layout_->images) {
    const std::set<std::string> truth(img.gt_classes.begin(), img.gt_classes.end());
    expected_gr += geovocab::testing::set_jaccard(img.expected_vocab, truth);
    expected_base += geovocab::testing::set_jaccard(pool_set, truth);
  }
  expected_gr /= static_cast<double>(layout_->images.size());
  expected_base /= static_cast<double>(layout_->images.size());

  ASSERT_TRUE(grcot.cat_acc && base.cat_acc);
  EXPECT_NEAR(*grcot.cat_acc, expected_gr, 1e-9);
  EXPECT_NEAR(*base.cat_acc, expected_base, 1e-9);
  EXPECT_GT(*grcot.cat_acc, *base.cat_acc);
  EXPECT_GE(grcot.miou, base.miou);
  EXPECT_EQ(grcot.fallback_count, 1u);
}

TEST_F(CorpusTest, PipelineDigestStable) {
  std::vector<std::string> digests;
  for (int run = 0; run < 2; ++run) {
    auto cfg = PipelineConfig::load(layout_->config("gr_cot"));
    cfg.output_dir = scratch("pipe_digest_" + std::to_string(run));
    cfg.jobs = run == 0 ? 1 : 4;
    const auto outcome = cmd_pipeline(cfg);
    EXPECT_EQ(manifest_digest(outcome.manifest), outcome.digest);
    EXPECT_EQ(read_json_file(cfg.output_dir / "manifest.json")["digest"], outcome.digest);
    digests.push_back(outcome.digest);
  }
  EXPECT_EQ(digests[0], digests[1]);
}

TEST_F(CorpusTest, PipelineConfigErrors) {
  auto cfg = PipelineConfig::load(layout_->config("gr_cot"));
  cfg.standards_path.reset();
  EXPECT_GEO_ERROR(cfg.validate(), ErrorCode::ConfigError);
  auto doc = read_json_file(layout_->config("gr_cot"));
  doc["alignment"]["always_include"] = json::array({"swamp"});
  EXPECT_GEO_ERROR(PipelineConfig::from_json(doc, layout_->root).validate(), ErrorCode::UnknownCategory);
}
