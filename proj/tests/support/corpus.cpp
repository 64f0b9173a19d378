#include "corpus.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "backends.hpp"
#include "geovocab/category.hpp"
#include "geovocab/digest.hpp"
#include "geovocab/distill.hpp"
#include "geovocab/file_util.hpp"
#include "geovocab/npy.hpp"
#include "geovocab/tensor.hpp"
#include "geovocab/tensor_io.hpp"
#include "knowledge.hpp"

namespace geovocab::testing {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json verdict(const std::string& category, bool present, const std::string& why) {
  return {{"category", category}, {"present", present}, {"justification", why}};
}

json attribute(const std::string& description, const std::string& kind, const std::string& region = {}) {
  json a{{"description", description}, {"kind", kind}};
  if (!region.empty()) a["region_hint"] = region;
  return a;
}

double unit(std::mt19937& rng) { return static_cast<double>(rng()) / 4294967296.0; }

}  // namespace

std::vector<CorpusImage> corpus_images() {
  std::vector<CorpusImage> images;

  {
    CorpusImage img;
    img.stem = "rural_greenhouse";
    img.gt_classes = {"agricultural", "background", "water"};
    img.confusion = Confusion{"agricultural", "building"};
    img.ignore_top_row = true;
    img.scene_reply = json{{"scene", "Rural"},
                           {"confidence", 0.92},
                           {"rationale", "cultivated parcels, greenhouse rows and scattered farmsteads"}}
                          .dump();
    img.decouple_reply =
        json{{"attributes",
              {attribute("regular rectangular translucent greenhouse rows", "geometry", "left third"),
               attribute("plastic mulch film strips over field parcels", "texture"),
               attribute("narrow channel of dark smooth water", "spectral", "right edge")}}}
            .dump(2);
    img.synthesize_reply =
        json{{"verdicts",
              {verdict("agricultural", true, "greenhouse rows and mulch film match the agricultural standard"),
               verdict("background", true, "unmapped strips between parcels"),
               verdict("barren", false, "no exposed ground"),
               verdict("building", false, "the rectangular translucent structures are greenhouses"),
               verdict("forest", false, "no canopy"),
               verdict("road", false, "no linear network"),
               verdict("water", true, "dark smooth channel")}}}
            .dump(2);
    img.expected_vocab = {"agricultural", "background", "water"};
    images.push_back(std::move(img));
  }
  {
    CorpusImage img;
    img.stem = "urban_shadows";
    img.gt_classes = {"background", "building", "road"};
    img.confusion = Confusion{"building", "water"};
    img.scene_reply =
        json{{"scene", "urban"}, {"confidence", 0.88}, {"rationale", "dense roofs and a street grid"}}.dump();
    img.decouple_reply =
        json{{"attributes",
              {attribute("dense blocks of rectangular roofs", "geometry"),
               attribute("fragmented dark shadows beside tall buildings", "spectral", "centre"),
               attribute("straight grey asphalt streets", "object")}}}
            .dump(2);
    img.synthesize_reply =
        "Reasoning over the standards gives the following verdicts.\n```json\n" +
        json{{"verdicts",
              {verdict("agricultural", false, "no fields"), verdict("background", true, "courtyards"),
               verdict("barren", false, "no bare ground"), verdict("building", true, "rectangular roofs"),
               verdict("forest", false, "no canopy"), verdict("road", true, "asphalt streets"),
               verdict("water", false, "the dark patches are fragmented shadows, not water")}}}
            .dump(2) +
        "\n```\nThe shadows were excluded by the building/water rule.";
    img.expected_vocab = {"background", "building", "road"};
    images.push_back(std::move(img));
  }
  {
    CorpusImage img;
    img.stem = "mountain_forest";
    img.gt_classes = {"background", "barren", "forest"};
    img.confusion = Confusion{"forest", "building"};
    img.scene_reply = json{{"scene", "forest"}, {"confidence", 1.3}, {"rationale", "forest-dominated mountain slopes"}}
                          .dump();
    img.decouple_reply =
        json{{"attributes",
              {attribute("dense dark green tree canopy with coarse granular texture", "texture"),
               attribute("patches of exposed rock and bare soil with ragged outlines", "object"),
               attribute("shaded valley floor", "landform")}}}
            .dump(2);
    img.synthesize_reply = json{{"verdicts",
                                 {verdict("agricultural", false, "no parcels"),
                                  verdict("background", true, "valley floor"),
                                  verdict("barren", true, "exposed rock"),
                                  verdict("building", false, "mountain forest is not built-up land"),
                                  verdict("forest", true, "continuous canopy"),
                                  verdict("water", false, "no open water")}}}
                               .dump(2);
    img.expected_vocab = {"background", "barren", "forest"};
    images.push_back(std::move(img));
  }
  {
    CorpusImage img;
    img.stem = "periurban_mix";
    img.gt_classes = {"agricultural", "background", "building", "road"};
    img.confusion = Confusion{"agricultural", "water"};
    img.scene_reply =
        json{{"scene", "mixed"}, {"confidence", 0.7}, {"rationale", "fields meeting a village edge"}}.dump();
    img.decouple_reply = "The tile shows houses along a road next to crop fields.";
    img.decouple_repair_reply =
        json{{"attributes",
              {attribute("small rectangular houses along a road", "geometry"),
               attribute("regular crop field parcels", "texture"),
               attribute("bright bare soil patch with messy surface texture", "texture")}}}
            .dump();
    img.synthesize_reply =
        json{{"verdicts",
              {verdict("agricultural", true, "crop parcels"), verdict("background", true, "verges"),
               verdict("barren", true, "messy bare soil patch"), verdict("building", true, "houses"),
               verdict("forest", false, "no canopy"), verdict("road", true, "road along the houses"),
               verdict("water", false, "no water")}}}
            .dump(2);
    img.expected_vocab = {"agricultural", "background", "barren", "building", "road"};
    images.push_back(std::move(img));
  }
  {
    CorpusImage img;
    img.stem = "lakeside";
    img.gt_classes = {"background", "forest", "water"};
    img.confusion = Confusion{"water", "building"};
    img.scene_reply =
        json{{"scene", "water-dominated"}, {"confidence", 0.81}, {"rationale", "a lake fills most of the tile"}}.dump();
    img.decouple_reply = json{{"attributes",
                               {attribute("large water body with smooth dark surface", "spectral"),
                                attribute("tree canopy along the shore", "texture")}}}
                             .dump(2);
    img.synthesize_reply =
        json{{"verdicts",
              {verdict("agricultural", false, "uncertain"), verdict("background", false, "uncertain"),
               verdict("barren", false, "uncertain"), verdict("building", false, "uncertain"),
               verdict("forest", false, "uncertain"), verdict("road", false, "uncertain"),
               verdict("water", false, "uncertain")}}}
            .dump(2);
    img.expected_vocab = {"agricultural", "background", "barren", "building", "forest", "road", "water"};
    img.expected_fallback = true;
    images.push_back(std::move(img));
  }
  {
    CorpusImage img;
    img.stem = "bare_fields";
    img.gt_classes = {"agricultural", "background", "barren"};
    img.confusion = Confusion{"barren", "road"};
    img.scene_reply =
        json{{"scene", "rural"}, {"confidence", 0.8}, {"rationale", "fields with bare patches"}}.dump();
    img.decouple_reply = json{{"attributes",
                               {attribute("isolated bare land with messy surface textures", "texture"),
                                attribute("regular crop parcels", "geometry")}}}
                             .dump(2);
    img.synthesize_reply =
        json{{"verdicts",
              {verdict("agricultural", true, "crop parcels"), verdict("background", true, "field margins"),
               verdict("barren", true, "isolated bare land"), verdict("building", false, "none"),
               verdict("forest", false, "none"), verdict("lava", true, "not a pool category"),
               verdict("road", false, "no network"), verdict("water", false, "none")}}}
            .dump(2);
    img.expected_vocab = {"agricultural", "background", "barren"};
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<std::uint16_t> tile_labels(const CorpusImage& image) {
  const auto pool = loveda_pool();
  const auto n = image.gt_classes.size();
  std::vector<std::uint16_t> labels(kTileSize * kTileSize);
  for (std::size_t y = 0; y < kTileSize; ++y) {
    for (std::size_t x = 0; x < kTileSize; ++x) {
      labels[y * kTileSize + x] = image.ignore_top_row && y == 0
                                      ? kIgnoreLabel
                                      : static_cast<std::uint16_t>(pool.require_index(image.gt_classes[x * n / kTileSize]));
    }
  }
  return labels;
}

std::vector<float> corpus_embeddings() {
  const auto k = loveda_pool().size();
  const auto d = kEmbeddingDim;
  std::mt19937 rng(20240607);
  std::vector<double> m(k * d);
  for (auto& v : m) v = unit(rng) * 2.0 - 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += m[i * d + c] * m[j * d + c];
      for (std::size_t c = 0; c < d; ++c) m[i * d + c] -= dot * m[j * d + c];
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += m[i * d + c] * m[i * d + c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) m[i * d + c] /= norm;
  }
  return {m.begin(), m.end()};
}

std::vector<std::uint8_t> tile_image(const CorpusImage& image) {
  static const std::uint8_t palette[7][3] = {{190, 200, 90}, {150, 150, 150}, {170, 130, 90}, {200, 60, 60},
                                             {30, 110, 40},  {90, 90, 100},   {40, 70, 160}};
  const auto labels = tile_labels(image);
  std::string header = "P6\n# " + image.stem + "\n" + std::to_string(kTileSize) + " " + std::to_string(kTileSize) +
                       "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (auto label : labels) {
    for (int c = 0; c < 3; ++c) bytes.push_back(label == kIgnoreLabel ? 0 : palette[label][c]);
  }
  return bytes;
}

CorpusLayout write_corpus(const fs::path& root) {
  const auto pool = loveda_pool();
  CorpusLayout layout;
  layout.root = fs::absolute(root);
  layout.features_dir = layout.root / "features";
  layout.images_dir = layout.root / "images";
  layout.gt_dir = layout.root / "gt";
  layout.fixtures_dir = layout.root / "fixtures";
  layout.embeddings = layout.root / "embeddings.npy";
  layout.sidecar = layout.root / "embeddings.json";
  layout.standards = layout.root / "standards.json";
  layout.pairs = layout.root / "pairs.json";
  layout.images = corpus_images();
  for (const auto& dir : {layout.features_dir, layout.images_dir, layout.gt_dir, layout.fixtures_dir}) {
    fs::create_directories(dir);
  }

  // Embedding rows are stored shuffled; the sidecar maps them back.
  const auto emb = corpus_embeddings();
  const std::vector<std::size_t> order{6, 3, 0, 5, 1, 4, 2};
  std::vector<float> shuffled;
  json rows = json::array();
  for (std::size_t r = 0; r < order.size(); ++r) {
    shuffled.insert(shuffled.end(), emb.begin() + order[r] * kEmbeddingDim, emb.begin() + (order[r] + 1) * kEmbeddingDim);
    rows.push_back({{"row", r}, {"category", pool[order[r]].name}});
  }
  write_file_atomic(layout.embeddings, npy::encode_f4({order.size(), kEmbeddingDim}, shuffled));
  write_json_file(layout.sidecar, {{"rows", rows}, {"dim", kEmbeddingDim}});

  std::mt19937 rng(7);
  for (const auto& img : layout.images) {
    const auto labels = tile_labels(img);
    write_file_atomic(layout.gt_dir / (img.stem + ".npy"), npy::encode_u2({kTileSize, kTileSize}, labels));

    const auto bytes = tile_image(img);
    write_file_atomic(layout.images_dir / (img.stem + ".ppm"), std::span<const std::uint8_t>(bytes));

    std::vector<float> features(kTileSize * kTileSize * kEmbeddingDim);
    const auto n = img.gt_classes.size();
    for (std::size_t y = 0; y < kTileSize; ++y) {
      for (std::size_t x = 0; x < kTileSize; ++x) {
        const auto& truth = img.gt_classes[x * n / kTileSize];
        std::vector<double> coef(pool.size(), 0.0);
        const bool confusable = img.confusion && img.confusion->truth == truth && y >= 2 && y <= 5;
        if (confusable) {
          coef[pool.require_index(truth)] = 0.55;
          coef[pool.require_index(img.confusion->lookalike)] = 0.8;
        } else {
          coef[pool.require_index(truth)] = 1.0;
        }
        const double scale = 0.5 + 1.5 * unit(rng);
        for (std::size_t c = 0; c < kEmbeddingDim; ++c) {
          double v = (unit(rng) - 0.5) * 0.16;
          for (std::size_t k = 0; k < pool.size(); ++k) v += coef[k] * emb[k * kEmbeddingDim + c];
          features[(y * kTileSize + x) * kEmbeddingDim + c] = static_cast<float>(scale * v);
        }
      }
    }
    write_file_atomic(layout.features_dir / (img.stem + ".npy"),
                      npy::encode_f4({kTileSize, kTileSize, kEmbeddingDim}, features));

    const auto hash = sha256_hex(std::span<const std::uint8_t>(bytes));
    write_fixture(layout.fixtures_dir, "scene_anchor__" + hash, img.scene_reply);
    write_fixture(layout.fixtures_dir, "decouple__" + hash, img.decouple_reply);
    if (img.decouple_repair_reply) write_fixture(layout.fixtures_dir, "decouple__" + hash, *img.decouple_repair_reply, true);
    write_fixture(layout.fixtures_dir, "synthesize__" + hash, img.synthesize_reply);
  }

  // Offline replies are recorded under the keys the library derives.
  Gateway gateway(std::make_unique<RecordingBackend>(std::make_unique<FunctionBackend>(distill_reply),
                                                     layout.fixtures_dir));
  DistillConfig config{StageSettings::from_dir(PromptLibrary::default_dir()), std::nullopt, 1};
  auto result = build_standards(pool, gateway, config);
  result.store.created_at = "2024-01-01T00:00:00Z";
  save_standards(result.store, layout.standards);
  write_json_file(layout.pairs, json::array({json::array({"agricultural", "building"}), json::array({"barren", "agricultural"})}));
  DistillConfig with_pairs{config.stage,
                           std::vector<CategoryPair>{{"agricultural", "building"}, {"barren", "agricultural"}}, 1};
  build_standards(pool, gateway, with_pairs);

  for (const char* mode : {"full_pool_baseline", "mllm_descriptions_only", "gr_cot"}) {
    write_json_file(layout.config(mode),
                    {{"pool", "loveda"},
                     {"standards", "standards.json"},
                     {"features_dir", "features"},
                     {"embeddings", "embeddings.npy"},
                     {"embeddings_sidecar", "embeddings.json"},
                     {"images_dir", "images"},
                     {"gt_dir", "gt"},
                     {"output_dir", std::string("out/") + mode},
                     {"mode", mode},
                     {"jobs", 4},
                     {"gateway", {{"mock_fixture_dir", "fixtures"}}},
                     {"alignment", {{"similarity", "cosine"}, {"always_include", {"background"}}}}});
  }
  return layout;
}

}  // namespace geovocab::testing
