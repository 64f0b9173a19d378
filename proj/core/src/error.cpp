#include "geovocab/error.hpp"

namespace geovocab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidPool: return "InvalidPool";
    case ErrorCode::ZeroVectorRow: return "ZeroVectorRow";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::FortranOrderUnsupported: return "FortranOrderUnsupported";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::RankMismatch: return "RankMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingCategoryRow: return "MissingCategoryRow";
    case ErrorCode::UnknownSidecarCategory: return "UnknownSidecarCategory";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::MissingStandard: return "MissingStandard";
    case ErrorCode::InvalidDocument: return "InvalidDocument";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::ShrinkUnsupported: return "ShrinkUnsupported";
    case ErrorCode::SentinelInPrediction: return "SentinelInPrediction";
    case ErrorCode::NoDefinedClasses: return "NoDefinedClasses";
    case ErrorCode::EmptyGroundTruthSet: return "EmptyGroundTruthSet";
    case ErrorCode::UnmatchedPair: return "UnmatchedPair";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::FixtureMissing: return "FixtureMissing";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::NoJsonFound: return "NoJsonFound";
    case ErrorCode::UnbalancedJson: return "UnbalancedJson";
    case ErrorCode::MalformedEnhancement: return "MalformedEnhancement";
    case ErrorCode::MalformedPairs: return "MalformedPairs";
    case ErrorCode::MalformedRule: return "MalformedRule";
    case ErrorCode::MalformedStandard: return "MalformedStandard";
    case ErrorCode::MalformedScene: return "MalformedScene";
    case ErrorCode::MalformedAttributes: return "MalformedAttributes";
    case ErrorCode::EmptyAttributeSet: return "EmptyAttributeSet";
    case ErrorCode::MalformedVerdicts: return "MalformedVerdicts";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::PromptTemplateError: return "PromptTemplateError";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::AuthError:
    case ErrorCode::RateLimited:
    case ErrorCode::TransportError:
    case ErrorCode::EmptyCompletion:
    case ErrorCode::NoJsonFound:
    case ErrorCode::UnbalancedJson:
    case ErrorCode::MalformedEnhancement:
    case ErrorCode::MalformedPairs:
    case ErrorCode::MalformedRule:
    case ErrorCode::MalformedStandard:
    case ErrorCode::MalformedScene:
    case ErrorCode::MalformedAttributes:
    case ErrorCode::EmptyAttributeSet:
    case ErrorCode::MalformedVerdicts:
      return ErrorCategory::Gateway;
    case ErrorCode::ConfigError:
    case ErrorCode::PromptTemplateError:
      return ErrorCategory::Config;
    default:
      return ErrorCategory::Data;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

Error Error::with_stage(std::string stage) const {
  Error tagged(code_, "stage '" + stage + "': " + detail_);
  tagged.detail_ = detail_;
  tagged.stage_ = std::move(stage);
  return tagged;
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace geovocab
