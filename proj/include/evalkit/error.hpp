#pragma once

#include <stdexcept>
#include <string>

namespace evalkit {

enum class ErrorCode {
  // data / schema
  SchemaMismatch,
  RaggedBatch,
  EmptyBatch,
  EmptyInput,
  LengthMismatch,
  IncompatibleSchemas,
  // accumulator
  SpillIOFailure,
  ChecksumMismatch,
  // metrics
  UnknownAveraging,
  EmptyReferenceSet,
  PositiveLogProb,
  // stats
  IterationOutOfRange,
  DegenerateMetric,
  // registry
  UnknownModule,
  VersionNotFound,
  InvalidManifest,
  CardValidationFailure,
  TargetExists,
  InvalidName,
  UnknownParameter,
  IOFailure,
  // evaluator
  DatasetParseError,
  ProviderCrash,
  ProviderProtocolViolation,
  ResponseTimeout,
  MetricSchemaMismatch,
  // service
  InvalidSpec,
  DatasetUnreadable,
  NotFound,
  AlreadyDecided,
  Unauthorized,
  UnknownMetricDirection,
  InvalidValue,
  UnknownMetric,
  Internal,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace evalkit
