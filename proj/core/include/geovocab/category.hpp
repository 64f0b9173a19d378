#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace geovocab {

struct Category {
  std::string name;     // lowercase identifier, unique within a pool
  std::string display;  // human label
  std::size_t index = 0;

  bool operator==(const Category&) const = default;
};

struct CategorySeed {
  std::string name;
  std::string display;
};

/// Ordered global class set. Names are lowercased and indices assigned by
/// position on construction; validity is checked separately by validate_pool.
class CategoryPool {
 public:
  CategoryPool() = default;
  explicit CategoryPool(std::vector<CategorySeed> seeds, std::optional<std::string> dataset_tag = std::nullopt);

  const std::vector<Category>& categories() const noexcept { return categories_; }
  const std::optional<std::string>& dataset_tag() const noexcept { return dataset_tag_; }
  std::size_t size() const noexcept { return categories_.size(); }
  bool empty() const noexcept { return categories_.empty(); }

  const Category& operator[](std::size_t index) const { return categories_.at(index); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Throws UnknownCategory when the name is not in the pool.
  std::size_t require_index(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  std::vector<std::string> names() const;

  auto begin() const noexcept { return categories_.begin(); }
  auto end() const noexcept { return categories_.end(); }

  bool operator==(const CategoryPool&) const = default;

 private:
  std::vector<Category> categories_;
  std::optional<std::string> dataset_tag_;
};

std::string normalize_name(std::string_view name);

/// Returns one human-readable description per broken pool invariant.
std::vector<std::string> validate_pool(const CategoryPool& pool);
/// Throws InvalidPool listing every violation.
void require_valid(const CategoryPool& pool);

CategoryPool loveda_pool();
CategoryPool gid5_pool();

nlohmann::json pool_to_json(const CategoryPool& pool);
CategoryPool pool_from_json(const nlohmann::json& doc);
CategoryPool load_pool(const std::string& path);

}  // namespace geovocab
