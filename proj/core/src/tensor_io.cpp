#include "geovocab/tensor_io.hpp"

#include <algorithm>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>

#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"
#include "geovocab/npy.hpp"

namespace geovocab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_fields(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorCode::InvalidDocument, where + ": unknown field '" + key + "'");
    }
  }
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string()) {
    fail(ErrorCode::InvalidDocument, where + ": field '" + key + "' must be a string");
  }
  return obj[key].get<std::string>();
}

void require_rank(const npy::Array& array, std::size_t rank, const fs::path& path) {
  if (array.header.shape.size() != rank) {
    fail(ErrorCode::RankMismatch, path.string() + ": expected rank " + std::to_string(rank) + ", got rank " +
                                      std::to_string(array.header.shape.size()));
  }
}

}  // namespace

DenseFeatureMap load_feature_map(const fs::path& npy_path) {
  const auto array = npy::read(npy_path);
  require_rank(array, 3, npy_path);
  const auto& s = array.header.shape;
  try {
    return DenseFeatureMap(s[0], s[1], s[2], array.as_f4());
  } catch (const Error& e) {
    throw Error(e.code(), npy_path.string() + ": " + e.detail());
  }
}

void save_feature_map(const DenseFeatureMap& f, const fs::path& npy_path) {
  write_file_atomic(npy_path, npy::encode_f4({f.height(), f.width(), f.dim()}, f.data()));
}

TextEmbeddingSet load_text_embeddings(const fs::path& npy_path, const CategoryPool& pool, const fs::path& sidecar_path) {
  const auto array = npy::read(npy_path);
  require_rank(array, 2, npy_path);
  const auto rows = array.header.shape[0];
  const auto dim = array.header.shape[1];
  const auto values = array.as_f4();

  const auto sidecar = read_json_file(sidecar_path);
  const auto where = sidecar_path.string();
  if (!sidecar.is_object() || !sidecar.contains("rows") || !sidecar["rows"].is_array()) {
    fail(ErrorCode::InvalidDocument, where + ": sidecar needs a 'rows' array");
  }
  reject_unknown_fields(sidecar, {"rows", "dim"}, where);
  if (sidecar.contains("dim")) {
    if (!sidecar["dim"].is_number_unsigned() || sidecar["dim"].get<std::size_t>() != dim) {
      fail(ErrorCode::ShapeMismatch, where + ": sidecar dim disagrees with tensor dim " + std::to_string(dim));
    }
  }

  std::vector<std::optional<std::size_t>> row_of(pool.size());
  std::set<std::size_t> used_rows;
  for (const auto& entry : sidecar["rows"]) {
    if (!entry.is_object() || !entry.contains("row") || !entry["row"].is_number_unsigned()) {
      fail(ErrorCode::InvalidDocument, where + ": each sidecar entry needs an unsigned 'row'");
    }
    reject_unknown_fields(entry, {"row", "category"}, where);
    const auto row = entry["row"].get<std::size_t>();
    const auto name = require_string(entry, "category", where);
    const auto idx = pool.index_of(name);
    if (!idx) fail(ErrorCode::UnknownSidecarCategory, name);
    if (row >= rows) {
      fail(ErrorCode::ShapeMismatch, where + ": row " + std::to_string(row) + " exceeds tensor rows " +
                                         std::to_string(rows));
    }
    if (row_of[*idx] || !used_rows.insert(row).second) {
      fail(ErrorCode::InvalidDocument, where + ": duplicate mapping for '" + name + "' or row " + std::to_string(row));
    }
    row_of[*idx] = row;
  }

  std::vector<float> ordered;
  ordered.reserve(pool.size() * dim);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!row_of[i]) fail(ErrorCode::MissingCategoryRow, pool[i].name);
    const auto begin = values.begin() + static_cast<std::ptrdiff_t>(*row_of[i] * dim);
    ordered.insert(ordered.end(), begin, begin + static_cast<std::ptrdiff_t>(dim));
  }
  return TextEmbeddingSet(pool, dim, std::move(ordered), false);
}

void save_text_embeddings(const TextEmbeddingSet& e, const fs::path& npy_path, const fs::path& sidecar_path) {
  write_file_atomic(npy_path, npy::encode_f4({e.rows(), e.dim()}, e.data()));
  json rows = json::array();
  for (const auto& c : e.pool()) rows.push_back({{"row", c.index}, {"category", c.name}});
  write_json_file(sidecar_path, json{{"rows", std::move(rows)}, {"dim", e.dim()}});
}

LabelRaster load_label_raster(const fs::path& npy_path, const CategoryPool& pool) {
  const auto array = npy::read(npy_path);
  require_rank(array, 2, npy_path);
  try {
    return LabelRaster(array.header.shape[0], array.header.shape[1], array.as_u2(), pool.size());
  } catch (const Error& e) {
    throw Error(e.code(), npy_path.string() + ": " + e.detail());
  }
}

std::vector<std::uint8_t> encode_label_raster(const LabelRaster& raster) {
  return npy::encode_u2({raster.height(), raster.width()}, raster.labels());
}

void save_label_raster(const LabelRaster& raster, const fs::path& npy_path) {
  write_file_atomic(npy_path, encode_label_raster(raster));
}

json standards_to_json(const StandardsStore& store) {
  json standards = json::array();
  for (const auto& c : store.pool) {
    auto it = store.standards.find(c.name);
    if (it == store.standards.end()) fail(ErrorCode::MissingStandard, c.name);
    const auto& s = it->second;
    standards.push_back({{"category", s.category},
                         {"morphology", s.morphology},
                         {"spectral_spatial", s.spectral_spatial},
                         {"exclusivity", s.exclusivity},
                         {"sub_classes", s.sub_classes},
                         {"source", std::string(to_string(s.source))}});
  }
  json rules = json::array();
  for (const auto& r : store.rules) {
    rules.push_back({{"category_a", r.category_a},
                     {"category_b", r.category_b},
                     {"rule", r.rule},
                     {"decides_for", r.decides_for},
                     {"cue", r.cue}});
  }
  return json{{"schema_version", store.schema_version},
              {"pool", pool_to_json(store.pool)},
              {"standards", std::move(standards)},
              {"rules", std::move(rules)},
              {"created_at", store.created_at}};
}

StandardsStore standards_from_json(const json& doc) {
  const std::string where = "standards store";
  if (!doc.is_object()) fail(ErrorCode::InvalidDocument, where + ": expected a JSON object");
  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
    fail(ErrorCode::InvalidDocument, where + ": missing integer schema_version");
  }
  const int version = doc["schema_version"].get<int>();
  if (version != kStandardsSchemaVersion) {
    fail(ErrorCode::SchemaVersionMismatch,
         "file has schema_version " + std::to_string(version) + ", reader supports " +
             std::to_string(kStandardsSchemaVersion));
  }
  reject_unknown_fields(doc, {"schema_version", "pool", "standards", "rules", "created_at"}, where);
  if (!doc.contains("pool")) fail(ErrorCode::InvalidDocument, where + ": missing pool");
  reject_unknown_fields(doc["pool"], {"dataset_tag", "categories"}, where + " pool");
  for (const auto& c : doc["pool"].value("categories", json::array())) {
    reject_unknown_fields(c, {"name", "display"}, where + " pool category");
  }

  StandardsStore store;
  store.schema_version = version;
  store.pool = pool_from_json(doc["pool"]);
  require_valid(store.pool);
  store.created_at = require_string(doc, "created_at", where);

  if (!doc.contains("standards") || !doc["standards"].is_array()) {
    fail(ErrorCode::InvalidDocument, where + ": 'standards' must be an array");
  }
  for (const auto& entry : doc["standards"]) {
    if (!entry.is_object()) fail(ErrorCode::InvalidDocument, where + ": standard entries must be objects");
    reject_unknown_fields(entry,
                          {"category", "morphology", "spectral_spatial", "exclusivity", "sub_classes", "source"},
                          where + " standard");
    InterpretationStandard s;
    s.category = normalize_name(require_string(entry, "category", where));
    s.morphology = require_string(entry, "morphology", where);
    s.spectral_spatial = require_string(entry, "spectral_spatial", where);
    s.exclusivity = require_string(entry, "exclusivity", where);
    if (entry.contains("sub_classes")) {
      if (!entry["sub_classes"].is_array()) fail(ErrorCode::InvalidDocument, where + ": sub_classes must be an array");
      for (const auto& sc : entry["sub_classes"]) {
        if (!sc.is_string()) fail(ErrorCode::InvalidDocument, where + ": sub_classes entries must be strings");
        s.sub_classes.push_back(sc.get<std::string>());
      }
    }
    s.source = standard_source_from_string(entry.value("source", std::string("mllm")));
    if (!store.standards.emplace(s.category, s).second) {
      fail(ErrorCode::InvalidDocument, where + ": duplicate standard for '" + s.category + "'");
    }
  }

  if (!doc.contains("rules") || !doc["rules"].is_array()) {
    fail(ErrorCode::InvalidDocument, where + ": 'rules' must be an array");
  }
  for (const auto& entry : doc["rules"]) {
    if (!entry.is_object()) fail(ErrorCode::InvalidDocument, where + ": rule entries must be objects");
    reject_unknown_fields(entry, {"category_a", "category_b", "rule", "decides_for", "cue"}, where + " rule");
    DiscriminationRule r;
    r.category_a = normalize_name(require_string(entry, "category_a", where));
    r.category_b = normalize_name(require_string(entry, "category_b", where));
    r.rule = require_string(entry, "rule", where);
    r.decides_for = normalize_name(require_string(entry, "decides_for", where));
    if (entry.contains("cue")) r.cue = require_string(entry, "cue", where);
    store.rules.push_back(std::move(r));
  }

  validate_store(store);
  return store;
}

void save_standards(const StandardsStore& store, const fs::path& path) {
  validate_store(store);
  write_json_file(path, standards_to_json(store));
}

StandardsStore load_standards(const fs::path& path) {
  try {
    return standards_from_json(read_json_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

}  // namespace geovocab
