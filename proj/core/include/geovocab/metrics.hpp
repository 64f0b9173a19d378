#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "geovocab/category.hpp"
#include "geovocab/tensor.hpp"

namespace geovocab {

/// counts[g][p] = pixels with ground truth g predicted as p.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(CategoryPool pool);

  const CategoryPool& pool() const noexcept { return pool_; }
  std::size_t size() const noexcept { return pool_.size(); }
  std::uint64_t count(std::size_t gt, std::size_t pred) const { return counts_[gt * size() + pred]; }
  std::uint64_t ignored_pixels() const noexcept { return ignored_; }
  std::uint64_t total() const;

  /// Throws DimMismatch or SentinelInPrediction; gt sentinel pixels are ignored.
  void accumulate(const LabelRaster& pred, const LabelRaster& gt);
  /// Elementwise addition; throws InvalidPool when the pools differ.
  void merge(const ConfusionMatrix& other);
  void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  CategoryPool pool_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelRaster& pred, const LabelRaster& gt);

/// nullopt marks a zero denominator.
struct ClassScore {
  std::string category;
  std::optional<double> value;
};

std::vector<ClassScore> per_class_iou(const ConfusionMatrix& cm);
std::vector<ClassScore> per_class_acc(const ConfusionMatrix& cm);

struct Overall {
  double miou = 0.0;
  double oa = 0.0;
};

/// Throws NoDefinedClasses when no class has a defined IoU.
Overall overall(const ConfusionMatrix& cm);

struct ImageCategories {
  std::string image;
  std::set<std::string> predicted;
  std::set<std::string> ground_truth;
};

/// |A n B| / |A u B| for one image.
double jaccard(const std::set<std::string>& predicted, const std::set<std::string>& ground_truth);

/// Mean per-image Jaccard. Throws EmptyGroundTruthSet naming the image.
double category_accuracy(const std::vector<ImageCategories>& per_image);

/// Names of pool classes that occur (non-sentinel) in a raster.
std::set<std::string> present_categories(const LabelRaster& raster, const CategoryPool& pool);

struct ClassRow {
  std::string category;
  std::optional<double> iou;
  std::optional<double> acc;

  bool operator==(const ClassRow&) const = default;
};

struct EvalReport {
  std::vector<ClassRow> per_class;
  double miou = 0.0;
  double oa = 0.0;
  std::optional<double> cat_acc;
  std::size_t images_evaluated = 0;
  std::size_t fallback_count = 0;
  std::uint64_t ignored_pixels = 0;

  bool operator==(const EvalReport&) const = default;
};

EvalReport make_report(const ConfusionMatrix& cm, std::optional<double> cat_acc, std::size_t images_evaluated,
                       std::size_t fallback_count);

enum class ReportFormat { TextTable, Json, Csv };

std::string_view to_string(ReportFormat format);
ReportFormat report_format_from_string(std::string_view text);

std::string render_report(const EvalReport& report, ReportFormat format);
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);
EvalReport report_from_csv(std::string_view text);

}  // namespace geovocab
