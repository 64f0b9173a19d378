#include "geovocab/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include <fmt/format.h>

#include "geovocab/error.hpp"

namespace geovocab {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(CategoryPool pool) : pool_(std::move(pool)) {
  counts_.assign(pool_.size() * pool_.size(), 0);
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t n) {
  if (gt >= size() || pred >= size()) {
    fail(ErrorCode::LabelOutOfRange, fmt::format("label pair ({}, {}) outside a {}-class matrix", gt, pred, size()));
  }
  counts_[gt * size() + pred] += n;
}

void ConfusionMatrix::accumulate(const LabelRaster& pred, const LabelRaster& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    fail(ErrorCode::DimMismatch, fmt::format("prediction {}x{} vs ground truth {}x{}", pred.height(), pred.width(),
                                             gt.height(), gt.width()));
  }
  const auto p = pred.labels();
  const auto g = gt.labels();
  const auto n = size();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == kIgnoreLabel) {
      fail(ErrorCode::SentinelInPrediction,
           fmt::format("prediction holds the ignore label at ({}, {})", i / pred.width(), i % pred.width()));
    }
    if (p[i] >= n) fail(ErrorCode::LabelOutOfRange, fmt::format("prediction label {} >= {}", p[i], n));
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i] == kIgnoreLabel) {
      ++ignored_;
      continue;
    }
    if (g[i] >= n) fail(ErrorCode::LabelOutOfRange, fmt::format("ground-truth label {} >= {}", g[i], n));
    ++counts_[g[i] * n + p[i]];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (!(pool_ == other.pool_)) fail(ErrorCode::InvalidPool, "cannot merge confusion matrices over different pools");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelRaster& pred, const LabelRaster& gt) {
  cm.accumulate(pred, gt);
  return cm;
}

namespace {

struct Tally {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

Tally tally(const ConfusionMatrix& cm, std::size_t k) {
  Tally t;
  t.tp = cm.count(k, k);
  for (std::size_t j = 0; j < cm.size(); ++j) {
    if (j == k) continue;
    t.fp += cm.count(j, k);
    t.fn += cm.count(k, j);
  }
  return t;
}

}  // namespace

std::vector<ClassScore> per_class_iou(const ConfusionMatrix& cm) {
  std::vector<ClassScore> out;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const auto t = tally(cm, k);
    const auto denom = t.tp + t.fp + t.fn;
    out.push_back({cm.pool()[k].name,
                   denom == 0 ? std::nullopt : std::optional<double>(static_cast<double>(t.tp) / denom)});
  }
  return out;
}

std::vector<ClassScore> per_class_acc(const ConfusionMatrix& cm) {
  std::vector<ClassScore> out;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const auto t = tally(cm, k);
    const auto denom = t.tp + t.fn;
    out.push_back({cm.pool()[k].name,
                   denom == 0 ? std::nullopt : std::optional<double>(static_cast<double>(t.tp) / denom)});
  }
  return out;
}

Overall overall(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& s : per_class_iou(cm)) {
    if (!s.value) continue;
    sum += *s.value;
    ++defined;
  }
  if (defined == 0) fail(ErrorCode::NoDefinedClasses, "no class has ground truth or predictions");
  std::uint64_t diag = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) diag += cm.count(k, k);
  const auto total = cm.total();
  return {sum / static_cast<double>(defined), total == 0 ? 0.0 : static_cast<double>(diag) / total};
}

double jaccard(const std::set<std::string>& predicted, const std::set<std::string>& ground_truth) {
  std::size_t inter = 0;
  for (const auto& name : predicted) inter += ground_truth.count(name);
  const auto uni = predicted.size() + ground_truth.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double category_accuracy(const std::vector<ImageCategories>& per_image) {
  if (per_image.empty()) fail(ErrorCode::PreconditionFailed, "category accuracy needs at least one image");
  double sum = 0.0;
  for (const auto& img : per_image) {
    if (img.ground_truth.empty()) fail(ErrorCode::EmptyGroundTruthSet, img.image);
    sum += jaccard(img.predicted, img.ground_truth);
  }
  return sum / static_cast<double>(per_image.size());
}

std::set<std::string> present_categories(const LabelRaster& raster, const CategoryPool& pool) {
  std::vector<bool> seen(pool.size(), false);
  for (auto v : raster.labels()) {
    if (v != kIgnoreLabel && v < pool.size()) seen[v] = true;
  }
  std::set<std::string> out;
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (seen[k]) out.insert(pool[k].name);
  }
  return out;
}

EvalReport make_report(const ConfusionMatrix& cm, std::optional<double> cat_acc, std::size_t images_evaluated,
                       std::size_t fallback_count) {
  EvalReport report;
  const auto iou = per_class_iou(cm);
  const auto acc = per_class_acc(cm);
  for (std::size_t k = 0; k < cm.size(); ++k) report.per_class.push_back({iou[k].category, iou[k].value, acc[k].value});
  const auto o = overall(cm);
  report.miou = o.miou;
  report.oa = o.oa;
  report.cat_acc = cat_acc;
  report.images_evaluated = images_evaluated;
  report.fallback_count = fallback_count;
  report.ignored_pixels = cm.ignored_pixels();
  return report;
}

std::string_view to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::TextTable: return "text";
    case ReportFormat::Json: return "json";
    case ReportFormat::Csv: return "csv";
  }
  return "text";
}

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "text" || text == "text_table" || text == "table") return ReportFormat::TextTable;
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  fail(ErrorCode::ConfigError, "unknown report format '" + std::string(text) + "' (expected text, json or csv)");
}

namespace {

constexpr std::string_view kUndefined = "\xE2\x80\x94";  // U+2014

std::string percent(std::optional<double> v) { return v ? fmt::format("{:.2f}", *v * 100.0) : std::string(kUndefined); }

std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad_left(std::string_view s, std::size_t width) {
  return std::string(width - std::min(width, display_width(s)), ' ') + std::string(s);
}

std::string center(std::string_view s, std::size_t width) {
  const auto w = display_width(s);
  if (w >= width) return std::string(s);
  const auto left = (width - w) / 2;
  return std::string(left, ' ') + std::string(s) + std::string(width - w - left, ' ');
}

std::string render_text(const EvalReport& r) {
  struct Group {
    std::string title;
    std::string first, second;
    std::string a, b;
  };
  std::vector<Group> groups;
  for (const auto& row : r.per_class) groups.push_back({row.category, "IoU", "Acc", percent(row.iou), percent(row.acc)});
  groups.push_back({"Overall", "mIoU", "OA", percent(r.miou), percent(r.oa)});

  std::string title_line = "|", sub_line = "|", rule_line = "|", value_line = "|";
  for (const auto& g : groups) {
    const auto cell = std::max<std::size_t>({6, (display_width(g.title) + 1) / 2, g.a.size(), g.b.size()});
    const auto span = 2 * cell + 3;
    title_line += " " + center(g.title, span) + " |";
    sub_line += " " + pad_left(g.first, cell) + " | " + pad_left(g.second, cell) + " |";
    rule_line += std::string(span + 2, '-') + "|";
    value_line += " " + pad_left(g.a, cell) + " | " + pad_left(g.b, cell) + " |";
  }
  std::string out = title_line + "\n" + sub_line + "\n" + rule_line + "\n" + value_line + "\n";
  if (r.cat_acc) out += "Cat. Acc.: " + fmt::format("{:.2f}", *r.cat_acc * 100.0) + "\n";
  out += fmt::format("Images evaluated: {}\n", r.images_evaluated);
  out += fmt::format("Vocabulary fallbacks: {}\n", r.fallback_count);
  out += fmt::format("Ignored pixels: {}\n", r.ignored_pixels);
  const bool any_undefined = std::any_of(r.per_class.begin(), r.per_class.end(),
                                         [](const ClassRow& row) { return !row.iou || !row.acc; });
  if (any_undefined) {
    out += std::string(kUndefined) + " undefined: the class has no ground-truth pixels (Acc) or neither ground truth "
           "nor predictions (IoU); excluded from mIoU.\n";
  }
  return out;
}

std::string csv_number(std::optional<double> v) { return v ? fmt::format("{:.17g}", *v) : std::string(); }

std::string render_csv(const EvalReport& r) {
  std::string out = "category,iou,acc\n";
  for (const auto& row : r.per_class) out += row.category + "," + csv_number(row.iou) + "," + csv_number(row.acc) + "\n";
  out += "overall," + csv_number(r.miou) + "," + csv_number(r.oa) + "\n";
  out += "cat_acc," + csv_number(r.cat_acc) + ",\n";
  out += fmt::format("images_evaluated,{},\n", r.images_evaluated);
  out += fmt::format("fallback_count,{},\n", r.fallback_count);
  out += fmt::format("ignored_pixels,{},\n", r.ignored_pixels);
  return out;
}

json optional_number(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

json report_to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.per_class) {
    rows.push_back({{"category", row.category}, {"iou", optional_number(row.iou)}, {"acc", optional_number(row.acc)}});
  }
  return {{"per_class", std::move(rows)},
          {"miou", r.miou},
          {"oa", r.oa},
          {"cat_acc", optional_number(r.cat_acc)},
          {"images_evaluated", r.images_evaluated},
          {"fallback_count", r.fallback_count},
          {"ignored_pixels", r.ignored_pixels}};
}

EvalReport report_from_json(const json& doc) {
  try {
    EvalReport r;
    for (const auto& row : doc.at("per_class")) {
      r.per_class.push_back({row.at("category").get<std::string>(), number_or_null(row.at("iou")),
                             number_or_null(row.at("acc"))});
    }
    r.miou = doc.at("miou").get<double>();
    r.oa = doc.at("oa").get<double>();
    r.cat_acc = number_or_null(doc.value("cat_acc", json(nullptr)));
    r.images_evaluated = doc.value("images_evaluated", std::size_t{0});
    r.fallback_count = doc.value("fallback_count", std::size_t{0});
    r.ignored_pixels = doc.value("ignored_pixels", std::uint64_t{0});
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed report: ") + e.what());
  }
}

EvalReport report_from_csv(std::string_view text) {
  auto parse_number = [](std::string_view cell) -> std::optional<double> {
    if (cell.empty()) return std::nullopt;
    try {
      return std::stod(std::string(cell));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidDocument, "bad CSV number '" + std::string(cell) + "'");
    }
  };
  auto parse_count = [](std::string_view cell) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      fail(ErrorCode::InvalidDocument, "bad CSV count '" + std::string(cell) + "'");
    }
    return v;
  };

  EvalReport r;
  bool header = true;
  bool after_overall = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != "category,iou,acc") fail(ErrorCode::InvalidDocument, "unexpected CSV header");
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos) fail(ErrorCode::InvalidDocument, "CSV row needs three cells");
    const auto name = line.substr(0, c1);
    const auto a = line.substr(c1 + 1, c2 - c1 - 1);
    const auto b = line.substr(c2 + 1);
    if (!after_overall) {
      if (name == "overall") {
        r.miou = parse_number(a).value_or(0.0);
        r.oa = parse_number(b).value_or(0.0);
        after_overall = true;
      } else {
        r.per_class.push_back({std::string(name), parse_number(a), parse_number(b)});
      }
    } else if (name == "cat_acc") {
      r.cat_acc = parse_number(a);
    } else if (name == "images_evaluated") {
      r.images_evaluated = parse_count(a);
    } else if (name == "fallback_count") {
      r.fallback_count = parse_count(a);
    } else if (name == "ignored_pixels") {
      r.ignored_pixels = parse_count(a);
    }
  }
  return r;
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::TextTable: return render_text(report);
    case ReportFormat::Json: return report_to_json(report).dump(2) + "\n";
    case ReportFormat::Csv: return render_csv(report);
  }
  return render_text(report);
}

}  // namespace geovocab
