#pragma once

// Batch commands behind the geovocab executable. Each returns normally on
// success and throws geovocab::Error otherwise; exit_code_for maps errors
// onto the process exit contract.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geovocab/align.hpp"
#include "geovocab/category.hpp"
#include "geovocab/error.hpp"
#include "geovocab/gateway.hpp"
#include "geovocab/metrics.hpp"
#include "geovocab/reason.hpp"

namespace geovocab::cli {

inline constexpr int kExitOk = 0;

int exit_code_for(const Error& error);

/// A pool file, or one of the built-in names "loveda" / "gid5".
CategoryPool resolve_pool(const std::string& spec);

struct CommonOptions {
  std::string pool = "loveda";
  GatewayConfig gateway;
  std::optional<std::filesystem::path> prompts_dir;
  int jobs = 4;
};

// distill -------------------------------------------------------------------

struct DistillOptions {
  CommonOptions common;
  std::filesystem::path out;
  std::optional<std::filesystem::path> pairs_file;
};

struct DistillOutcome {
  StandardsStore store;
  std::map<std::string, int> calls_by_schema;
  std::vector<std::string> warnings;
};

DistillOutcome cmd_distill(const DistillOptions& options);

// reason --------------------------------------------------------------------

struct ReasonOptions {
  CommonOptions common;
  /// Image files, or directories whose files are all taken as images.
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path standards;
  std::filesystem::path out_dir;
  bool keep_going = false;
};

struct ImageFailure {
  std::string image;
  std::string stage;
  ErrorCode code = ErrorCode::PreconditionFailed;
  std::string message;
};

struct ReasonOutcome {
  std::vector<std::filesystem::path> traces;
  std::vector<ImageFailure> failures;
};

/// Writes {hash}.trace.json per image, and failures.json when any image
/// fails. Without keep_going a failure is rethrown after the batch finishes.
ReasonOutcome cmd_reason(const ReasonOptions& options);

std::vector<std::filesystem::path> list_images(const std::vector<std::filesystem::path>& inputs);

// segment -------------------------------------------------------------------

struct SegmentOptions {
  std::string pool = "loveda";
  std::filesystem::path features;
  std::filesystem::path embeddings;
  std::filesystem::path sidecar;
  std::optional<std::filesystem::path> trace;
  bool full_pool = false;
  AlignmentConfig alignment;
  std::filesystem::path out;
};

LabelRaster cmd_segment(const SegmentOptions& options);

// eval ----------------------------------------------------------------------

struct EvalOptions {
  std::string pool = "loveda";
  std::filesystem::path pred_dir;
  std::filesystem::path gt_dir;
  std::optional<std::filesystem::path> traces_dir;
  ReportFormat format = ReportFormat::TextTable;
  std::optional<std::filesystem::path> out;
  int jobs = 4;
};

struct EvalOutcome {
  EvalReport report;
  std::string rendered;
};

EvalOutcome cmd_eval(const EvalOptions& options);

/// Predicted vocabulary per image stem, read from *.trace.json files.
std::map<std::string, ReasoningTrace> load_traces_by_stem(const std::filesystem::path& dir, const CategoryPool& pool);

// pipeline ------------------------------------------------------------------

enum class Mode { FullPoolBaseline, MllmDescriptionsOnly, GrCot };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view text);

struct PipelineConfig {
  std::string pool = "loveda";
  std::optional<std::filesystem::path> standards_path;
  std::filesystem::path features_dir;
  std::filesystem::path embeddings_path;
  std::filesystem::path embeddings_sidecar;
  /// Optional embeddings of standards-enhanced category prompts used by mllm_descriptions_only.
  std::optional<std::filesystem::path> description_embeddings_path;
  std::optional<std::filesystem::path> description_embeddings_sidecar;
  std::filesystem::path images_dir;
  std::optional<std::filesystem::path> gt_dir;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> prompts_dir;
  GatewayConfig gateway;
  AlignmentConfig alignment;
  Mode mode = Mode::GrCot;
  int jobs = 4;

  /// Relative paths resolve against `base_dir`. Throws ConfigError.
  static PipelineConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Checks invariants and that referenced paths exist. Throws ConfigError.
  void validate() const;
};

struct PipelineOutcome {
  std::optional<EvalReport> report;
  nlohmann::json manifest;
  std::string digest;
};

PipelineOutcome cmd_pipeline(const PipelineConfig& config);

/// sha256 over the canonical manifest with timestamps and timings removed.
std::string manifest_digest(const nlohmann::json& manifest);

}  // namespace geovocab::cli
