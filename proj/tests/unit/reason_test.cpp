#include <random>

#include <gtest/gtest.h>

#include "backends.hpp"
#include "corpus.hpp"
#include "geovocab/distill.hpp"
#include "geovocab/reason.hpp"
#include "knowledge.hpp"
#include "test_util.hpp"

using namespace geovocab;
using geovocab::testing::CorpusImage;
using geovocab::testing::FunctionBackend;
using geovocab::testing::TempDir;
using nlohmann::json;

namespace {

StageSettings settings() { return StageSettings::from_dir(PromptLibrary::default_dir()); }

const StandardsStore& loveda_store() {
  static const StandardsStore store = [] {
    Gateway gw(std::make_unique<FunctionBackend>(geovocab::testing::distill_reply));
    DistillConfig cfg{settings(), std::nullopt, 1};
    return build_standards(loveda_pool(), gw, cfg).store;
  }();
  return store;
}

const CorpusImage& corpus_image(const std::string& stem) {
  static const auto images = geovocab::testing::corpus_images();
  for (const auto& img : images) {
    if (img.stem == stem) return img;
  }
  throw std::runtime_error("no corpus image " + stem);
}

ImageRef image_of(const CorpusImage& img) {
  return image_from_bytes(img.stem + ".ppm", geovocab::testing::tile_image(img));
}

/// Answers online requests with the corpus replies of one image.
Gateway corpus_gateway(const CorpusImage& img, std::vector<std::string> skip = {}) {
  return Gateway(std::make_unique<FunctionBackend>([img, skip](const ChatRequest& r) -> std::string {
    const auto& id = r.response_schema_id;
    if (std::find(skip.begin(), skip.end(), id) != skip.end()) fail(ErrorCode::FixtureMissing, id + "__" + img.stem);
    if (id == "scene_anchor") return img.scene_reply;
    if (id == "decouple") {
      return r.repair_round > 0 && img.decouple_repair_reply ? *img.decouple_repair_reply : img.decouple_reply;
    }
    if (id == "synthesize") return img.synthesize_reply;
    fail(ErrorCode::FixtureMissing, id);
  }));
}

Gateway reply_gateway(std::string reply) {
  return Gateway(std::make_unique<FunctionBackend>([reply](const ChatRequest&) { return reply; }));
}

VisualAttributeSet attrs(std::vector<std::string> descriptions, std::string scene = "rural") {
  VisualAttributeSet set;
  set.scene = {scene, 0.9, ""};
  for (auto& d : descriptions) set.attributes.push_back({std::move(d), AttributeKind::Object, std::nullopt});
  return set;
}

std::set<std::string> selected_set(const AdaptiveVocabulary& v) { return {v.selected().begin(), v.selected().end()}; }

}  // namespace

TEST(AnchorScene, RuralTile) {
  const auto& img = corpus_image("rural_greenhouse");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto scene = anchor_scene(image_of(img), gw, settings(), &log);
  EXPECT_EQ(scene.label, "rural");
  EXPECT_DOUBLE_EQ(scene.confidence, 0.92);
  EXPECT_FALSE(log.prompt.empty());
  EXPECT_TRUE(log.warnings.empty());
}

TEST(AnchorScene, ConfidenceClamped) {
  const auto& img = corpus_image("mountain_forest");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto scene = anchor_scene(image_of(img), gw, settings(), &log);
  EXPECT_EQ(scene.label, "forest");
  EXPECT_EQ(scene.confidence, 1.0);
  EXPECT_EQ(log.warnings.size(), 1u);
}

TEST(AnchorScene, NeedsPayload) {
  auto gw = reply_gateway("{}");
  ImageRef empty;
  empty.uri = "x.png";
  EXPECT_GEO_ERROR(anchor_scene(empty, gw, settings()), ErrorCode::PreconditionFailed);
}

TEST(AnchorScene, ProseTwiceIsMalformed) {
  auto gw = reply_gateway("It looks rural to me.");
  EXPECT_GEO_ERROR(anchor_scene(image_of(corpus_image("lakeside")), gw, settings()), ErrorCode::MalformedScene);
  EXPECT_EQ(gw.total_calls(), 2);
}

TEST(Decouple, GreenhouseGeometry) {
  const auto& img = corpus_image("rural_greenhouse");
  auto gw = corpus_gateway(img);
  const auto set = decouple_attributes(image_of(img), {"rural", 0.9, ""}, gw, settings());
  ASSERT_FALSE(set.attributes.empty());
  EXPECT_EQ(set.attributes[0].kind, AttributeKind::Geometry);
  EXPECT_NE(set.attributes[0].description.find("translucent"), std::string::npos);
  EXPECT_EQ(set.attributes[0].region_hint, "left third");
  EXPECT_EQ(set.scene.label, "rural");
}

TEST(Decouple, ShadowsAndStreets) {
  const auto& img = corpus_image("urban_shadows");
  auto gw = corpus_gateway(img);
  const auto set = decouple_attributes(image_of(img), {"urban", 0.9, ""}, gw, settings());
  ASSERT_EQ(set.attributes.size(), 3u);
  EXPECT_NE(set.attributes[1].description.find("fragmented dark shadows"), std::string::npos);
  EXPECT_EQ(set.attributes[1].kind, AttributeKind::Spectral);
}

TEST(Decouple, UnknownKindBecomesObject) {
  const auto& img = corpus_image("mountain_forest");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto set = decouple_attributes(image_of(img), {"forest", 1.0, ""}, gw, settings(), &log);
  EXPECT_EQ(set.attributes.back().kind, AttributeKind::Object);
  ASSERT_EQ(log.warnings.size(), 1u);
  EXPECT_NE(log.warnings[0].find("landform"), std::string::npos);
}

TEST(Decouple, RepairRound) {
  const auto& img = corpus_image("periurban_mix");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto set = decouple_attributes(image_of(img), {"mixed", 0.7, ""}, gw, settings(), &log);
  EXPECT_EQ(set.attributes.size(), 3u);
  EXPECT_EQ(log.rounds, 2);
}

TEST(Decouple, EmptyTwice) {
  auto gw = reply_gateway(R"({"attributes": []})");
  EXPECT_GEO_ERROR(decouple_attributes(image_of(corpus_image("lakeside")), {"mixed", 0.5, ""}, gw, settings()),
                   ErrorCode::EmptyAttributeSet);
  EXPECT_EQ(gw.total_calls(), 2);
}

TEST(Synthesize, GreenhousesAreAgricultural) {
  const auto& img = corpus_image("rural_greenhouse");
  auto gw = corpus_gateway(img);
  const auto set = attrs({"regular rectangular translucent greenhouse rows"});
  const auto vocab = synthesize_vocabulary(image_of(img), set.scene, set, loveda_store(), gw, settings());
  EXPECT_EQ(selected_set(vocab), img.expected_vocab);
  EXPECT_FALSE(vocab.fallback_used());
  const auto& building = vocab.verdicts()[loveda_pool().require_index("building")];
  EXPECT_FALSE(building.present);
  EXPECT_EQ(building.decided_by, VerdictSource::Mllm);
}

TEST(Synthesize, ForestSceneDropsBuilding) {
  const auto& img = corpus_image("mountain_forest");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto set = attrs({"dense dark green tree canopy with coarse granular texture",
                          "patches of exposed rock and bare soil with ragged outlines"},
                         "forest");
  const auto vocab = synthesize_vocabulary(image_of(img), set.scene, set, loveda_store(), gw, settings(), &log);
  EXPECT_EQ(selected_set(vocab), img.expected_vocab);
  const auto& road = vocab.verdicts()[loveda_pool().require_index("road")];
  EXPECT_EQ(road.decided_by, VerdictSource::RuleEngine);
  EXPECT_FALSE(road.present);
}

TEST(Synthesize, AllAbsentFallsBack) {
  const auto& img = corpus_image("lakeside");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto set = attrs({"large water body with smooth dark surface"}, "water-dominated");
  const auto vocab = synthesize_vocabulary(image_of(img), set.scene, set, loveda_store(), gw, settings(), &log);
  EXPECT_TRUE(vocab.fallback_used());
  EXPECT_EQ(vocab.selected(), loveda_pool().names());
  EXPECT_FALSE(log.warnings.empty());
}

TEST(Synthesize, UnknownCategoryDropped) {
  const auto& img = corpus_image("bare_fields");
  auto gw = corpus_gateway(img);
  StageLog log;
  const auto set = attrs({"isolated bare land with messy surface textures"});
  const auto vocab = synthesize_vocabulary(image_of(img), set.scene, set, loveda_store(), gw, settings(), &log);
  EXPECT_EQ(selected_set(vocab), img.expected_vocab);
  ASSERT_EQ(log.warnings.size(), 1u);
  EXPECT_NE(log.warnings[0].find("lava"), std::string::npos);
}

TEST(RuleFallback, WaterBody) {
  const auto set = attrs({"large water body with smooth dark surface"});
  const auto v = rule_fallback_verify("water", set.scene, set, loveda_store());
  EXPECT_TRUE(v.present);
  EXPECT_EQ(v.decided_by, VerdictSource::RuleEngine);
}

TEST(RuleFallback, NoOverlapIsAbsent) {
  const auto set = attrs({"dense dark green tree canopy"});
  EXPECT_FALSE(rule_fallback_verify("road", set.scene, set, loveda_store()).present);
}

TEST(RuleFallback, GreenhouseRuleVetoesBuilding) {
  const auto set = attrs({"translucent greenhouse rows"});
  const auto building = rule_fallback_verify("building", set.scene, set, loveda_store());
  const auto agri = rule_fallback_verify("agricultural", set.scene, set, loveda_store());
  EXPECT_FALSE(building.present);
  EXPECT_NE(building.justification.find("agricultural"), std::string::npos);
  EXPECT_TRUE(agri.present);
}

TEST(RuleFallback, HandCountedOverlaps) {
  // building standard keywords include "row" and "roof"; the greenhouse cue has "translucent" and "greenhouse"
  const auto attr = keyword_set("translucent greenhouse rows");
  EXPECT_EQ(attr, (std::set<std::string>{"translucent", "greenhouse", "row"}));
  const auto& b = loveda_store().standard_for("building");
  const auto bkeys = keyword_set(b.morphology + " " + b.spectral_spatial);
  EXPECT_TRUE(bkeys.count("row"));
  EXPECT_FALSE(bkeys.count("greenhouse"));
}

TEST(RuleFallback, MissingStandard) {
  auto store = loveda_store();
  store.standards.erase("road");
  const auto set = attrs({"road"});
  EXPECT_GEO_ERROR(rule_fallback_verify("road", set.scene, set, store), ErrorCode::MissingStandard);
}

TEST(RuleFallback, PureFunction) {
  std::mt19937 rng(5);
  const std::vector<std::string> words{"water", "road",   "greenhouse", "rows",  "shadow", "canopy", "bare",
                                       "soil",  "messy",  "roofs",      "lake",  "strip",  "the",    "of"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> descriptions;
    for (int a = 0; a < 3; ++a) {
      std::string d;
      for (int w = 0; w < 4; ++w) d += words[rng() % words.size()] + " ";
      descriptions.push_back(d);
    }
    const auto set = attrs(descriptions);
    for (const auto& c : loveda_pool()) {
      EXPECT_EQ(rule_fallback_verify(c.name, set.scene, set, loveda_store()),
                rule_fallback_verify(c.name, set.scene, set, loveda_store()));
    }
  }
}

TEST(KeywordSet, TokenRules) {
  EXPECT_EQ(keyword_set("The Roads, and THIS lake's edges!"),
            (std::set<std::string>{"road", "lake", "edge"}));
  EXPECT_EQ(keyword_set("grass glass"), (std::set<std::string>{"grass", "glass"}));
  EXPECT_TRUE(keyword_set("a of to").empty());
}

TEST(RunChain, CompleteTrace) {
  const auto& img = corpus_image("rural_greenhouse");
  auto gw = corpus_gateway(img);
  const auto trace = run_chain(image_of(img), loveda_store(), gw, settings());
  EXPECT_EQ(trace.scene.label, "rural");
  EXPECT_EQ(selected_set(trace.vocabulary), img.expected_vocab);
  std::set<std::string> keys;
  for (const auto& [k, _] : trace.raw_responses) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"anchor", "decouple", "synthesize"}));
  EXPECT_EQ(trace.stage_timings_ms.size(), 3u);
  const auto& prompt = trace.prompts.at("synthesize");
  EXPECT_NE(prompt.find("rural"), std::string::npos);
  for (const auto& a : trace.attributes.attributes) EXPECT_NE(prompt.find(a.description), std::string::npos);
}

TEST(RunChain, MissingDecoupleNamesStage) {
  const auto& img = corpus_image("urban_shadows");
  auto gw = corpus_gateway(img, {"decouple"});
  try {
    run_chain(image_of(img), loveda_store(), gw, settings());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixtureMissing);
    EXPECT_EQ(e.stage(), "decouple");
  }
  EXPECT_EQ(gw.calls_by_schema().count("synthesize"), 0u);
}

TEST(RunChain, DeterministicModuloTimings) {
  for (const auto& img : geovocab::testing::corpus_images()) {
    auto gw1 = corpus_gateway(img);
    auto gw2 = corpus_gateway(img);
    const auto a = run_chain(image_of(img), loveda_store(), gw1, settings());
    const auto b = run_chain(image_of(img), loveda_store(), gw2, settings());
    EXPECT_EQ(trace_to_json(a), trace_to_json(b)) << img.stem;
    EXPECT_EQ(selected_set(a.vocabulary), img.expected_vocab) << img.stem;
    EXPECT_EQ(a.vocabulary.fallback_used(), img.expected_fallback) << img.stem;
    for (const auto& name : a.vocabulary.selected()) EXPECT_TRUE(loveda_pool().contains(name));
  }
}

TEST(Trace, JsonRoundTrip) {
  TempDir dir("trace");
  const auto& img = corpus_image("periurban_mix");
  auto gw = corpus_gateway(img);
  const auto trace = run_chain(image_of(img), loveda_store(), gw, settings());
  const auto path = dir / trace_file_name(trace).string();
  EXPECT_EQ(trace_file_name(trace).string(), trace.image.content_hash + ".trace.json");
  save_trace(trace, path);
  const auto back = load_trace(path, loveda_pool());
  EXPECT_EQ(back.vocabulary, trace.vocabulary);
  EXPECT_EQ(back.attributes, trace.attributes);
  EXPECT_EQ(trace_to_json(back), trace_to_json(trace));

  auto doc = trace_to_json(trace);
  doc["vocabulary"]["selected"] = json::array({"water"});
  EXPECT_GEO_ERROR(trace_from_json(doc, loveda_pool()), ErrorCode::InvalidDocument);
}
