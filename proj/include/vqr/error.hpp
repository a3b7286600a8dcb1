#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vqr {

enum class ErrorCode {
  // domain / ingestion
  EmptyModificationText,
  DuplicateQueryId,
  UnknownCategory,
  DuplicateCandidateId,
  InvalidArgument,
  IngestionError,
  InvalidConfig,
  NotFound,
  // question generation
  ParseError,
  EmptyQuestionList,
  InvalidExpectedAnswer,
  NotAQuestion,
  ExhaustedRetries,
  EmptyCorpus,
  // inference backends
  BackendUnavailable,
  Timeout,
  ProtocolError,
  MissingBothAnswerTokens,
  // scoring
  EmptyQuestionSet,
  NonPositiveK,
  EmptyScoreList,
  // dataset builder
  MissingQuestions,
  AnnotatorUnavailable,
  AttemptCapExhausted,
  OneClassEmpty,
  // evaluation
  MissingTarget,
  MissingCategory,
  SingleClassOnly,
};

std::string_view error_name(ErrorCode code) noexcept;

// True for failures of an external model backend (as opposed to bad input data).
bool is_backend_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace vqr
