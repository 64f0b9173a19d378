#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geovocab {

enum class ErrorCode {
  // data / validation
  InvalidPool,
  ZeroVectorRow,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  FortranOrderUnsupported,
  TruncatedPayload,
  ShapeMismatch,
  RankMismatch,
  NonFiniteValue,
  MissingCategoryRow,
  UnknownSidecarCategory,
  UnknownCategory,
  LabelOutOfRange,
  SchemaVersionMismatch,
  MissingStandard,
  InvalidDocument,
  DimMismatch,
  EmptyCandidates,
  ShrinkUnsupported,
  SentinelInPrediction,
  NoDefinedClasses,
  EmptyGroundTruthSet,
  UnmatchedPair,
  PreconditionFailed,
  FixtureMissing,
  IoError,
  // gateway / model output
  AuthError,
  RateLimited,
  TransportError,
  EmptyCompletion,
  NoJsonFound,
  UnbalancedJson,
  MalformedEnhancement,
  MalformedPairs,
  MalformedRule,
  MalformedStandard,
  MalformedScene,
  MalformedAttributes,
  EmptyAttributeSet,
  MalformedVerdicts,
  // configuration
  ConfigError,
  PromptTemplateError,
};

/// Coarse classification used for process exit codes.
enum class ErrorCategory { Data = 1, Gateway = 2, Config = 3 };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  /// Pipeline stage that raised the error, empty when not stage-bound.
  const std::string& stage() const noexcept { return stage_; }

  /// Returns a copy tagged with a stage name; the message gains a "stage 'x': " prefix.
  Error with_stage(std::string stage) const;

 private:
  ErrorCode code_;
  std::string detail_;
  std::string stage_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace geovocab
