#include "geovocab/category.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"

namespace geovocab {

std::string normalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  auto first = out.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = out.find_last_not_of(" \t\r\n");
  return out.substr(first, last - first + 1);
}

CategoryPool::CategoryPool(std::vector<CategorySeed> seeds, std::optional<std::string> dataset_tag)
    : dataset_tag_(std::move(dataset_tag)) {
  categories_.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    auto& seed = seeds[i];
    Category c{normalize_name(seed.name), std::move(seed.display), i};
    if (c.display.empty()) c.display = c.name;
    categories_.push_back(std::move(c));
  }
}

std::optional<std::size_t> CategoryPool::index_of(std::string_view name) const {
  const auto key = normalize_name(name);
  for (const auto& c : categories_) {
    if (c.name == key) return c.index;
  }
  return std::nullopt;
}

std::size_t CategoryPool::require_index(std::string_view name) const {
  if (auto idx = index_of(name)) return *idx;
  fail(ErrorCode::UnknownCategory, "category '" + std::string(name) + "' is not in the pool");
}

std::vector<std::string> CategoryPool::names() const {
  std::vector<std::string> out;
  out.reserve(categories_.size());
  for (const auto& c : categories_) out.push_back(c.name);
  return out;
}

std::vector<std::string> validate_pool(const CategoryPool& pool) {
  std::vector<std::string> violations;
  if (pool.empty()) {
    violations.emplace_back("pool: must contain at least one category");
    return violations;
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& c = pool.categories()[i];
    if (c.name.empty()) {
      violations.push_back("category #" + std::to_string(i) + ": name must be non-empty");
      continue;
    }
    if (c.index != i) {
      violations.push_back("category '" + c.name + "': index " + std::to_string(c.index) +
                           " does not match position " + std::to_string(i));
    }
    if (c.name != normalize_name(c.name)) {
      violations.push_back("category '" + c.name + "': name must be lowercase");
    }
    if (!seen.insert(c.name).second) {
      violations.push_back("category '" + c.name + "': duplicate name");
    }
  }
  return violations;
}

void require_valid(const CategoryPool& pool) {
  auto violations = validate_pool(pool);
  if (violations.empty()) return;
  std::string msg;
  for (const auto& v : violations) {
    if (!msg.empty()) msg += "; ";
    msg += v;
  }
  fail(ErrorCode::InvalidPool, msg);
}

CategoryPool loveda_pool() {
  return CategoryPool({{"agricultural", "Agricultural"},
                       {"background", "Background"},
                       {"barren", "Barren"},
                       {"building", "Building"},
                       {"forest", "Forest"},
                       {"road", "Road"},
                       {"water", "Water"}},
                      "loveda");
}

CategoryPool gid5_pool() {
  return CategoryPool({{"background", "Background"},
                       {"built-up", "Built-up"},
                       {"farmland", "Farmland"},
                       {"forest", "Forest"},
                       {"meadow", "Meadow"},
                       {"water", "Water"}},
                      "gid5");
}

nlohmann::json pool_to_json(const CategoryPool& pool) {
  nlohmann::json doc = nlohmann::json::object();
  if (pool.dataset_tag()) doc["dataset_tag"] = *pool.dataset_tag();
  auto cats = nlohmann::json::array();
  for (const auto& c : pool) cats.push_back({{"name", c.name}, {"display", c.display}});
  doc["categories"] = std::move(cats);
  return doc;
}

CategoryPool pool_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("categories") || !doc["categories"].is_array()) {
    fail(ErrorCode::InvalidDocument, "pool document needs a 'categories' array");
  }
  std::optional<std::string> tag;
  if (doc.contains("dataset_tag") && !doc["dataset_tag"].is_null()) {
    if (!doc["dataset_tag"].is_string()) fail(ErrorCode::InvalidDocument, "pool 'dataset_tag' must be a string");
    tag = doc["dataset_tag"].get<std::string>();
  }
  std::vector<CategorySeed> seeds;
  for (const auto& entry : doc["categories"]) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      fail(ErrorCode::InvalidDocument, "pool category entries need a string 'name'");
    }
    CategorySeed seed{entry["name"].get<std::string>(), {}};
    if (entry.contains("display")) {
      if (!entry["display"].is_string()) fail(ErrorCode::InvalidDocument, "pool 'display' must be a string");
      seed.display = entry["display"].get<std::string>();
    }
    seeds.push_back(std::move(seed));
  }
  return CategoryPool(std::move(seeds), std::move(tag));
}

CategoryPool load_pool(const std::string& path) {
  auto pool = pool_from_json(read_json_file(path));
  require_valid(pool);
  return pool;
}

}  // namespace geovocab
