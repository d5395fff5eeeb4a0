#include "evalkit/error.hpp"

namespace evalkit {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::RaggedBatch: return "RaggedBatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IncompatibleSchemas: return "IncompatibleSchemas";
    case ErrorCode::SpillIOFailure: return "SpillIOFailure";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::UnknownAveraging: return "UnknownAveraging";
    case ErrorCode::EmptyReferenceSet: return "EmptyReferenceSet";
    case ErrorCode::PositiveLogProb: return "PositiveLogProb";
    case ErrorCode::IterationOutOfRange: return "IterationOutOfRange";
    case ErrorCode::DegenerateMetric: return "DegenerateMetric";
    case ErrorCode::UnknownModule: return "UnknownModule";
    case ErrorCode::VersionNotFound: return "VersionNotFound";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::CardValidationFailure: return "CardValidationFailure";
    case ErrorCode::TargetExists: return "TargetExists";
    case ErrorCode::InvalidName: return "InvalidName";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::DatasetParseError: return "DatasetParseError";
    case ErrorCode::ProviderCrash: return "ProviderCrash";
    case ErrorCode::ProviderProtocolViolation: return "ProviderProtocolViolation";
    case ErrorCode::ResponseTimeout: return "ResponseTimeout";
    case ErrorCode::MetricSchemaMismatch: return "MetricSchemaMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DatasetUnreadable: return "DatasetUnreadable";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::AlreadyDecided: return "AlreadyDecided";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::UnknownMetricDirection: return "UnknownMetricDirection";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::UnknownMetric: return "UnknownMetric";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace evalkit
