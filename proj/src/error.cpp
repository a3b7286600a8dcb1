#include "vqr/error.hpp"

namespace vqr {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyModificationText: return "EmptyModificationText";
    case ErrorCode::DuplicateQueryId: return "DuplicateQueryId";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::DuplicateCandidateId: return "DuplicateCandidateId";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IngestionError: return "IngestionError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyQuestionList: return "EmptyQuestionList";
    case ErrorCode::InvalidExpectedAnswer: return "InvalidExpectedAnswer";
    case ErrorCode::NotAQuestion: return "NotAQuestion";
    case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::MissingBothAnswerTokens: return "MissingBothAnswerTokens";
    case ErrorCode::EmptyQuestionSet: return "EmptyQuestionSet";
    case ErrorCode::NonPositiveK: return "NonPositiveK";
    case ErrorCode::EmptyScoreList: return "EmptyScoreList";
    case ErrorCode::MissingQuestions: return "MissingQuestions";
    case ErrorCode::AnnotatorUnavailable: return "AnnotatorUnavailable";
    case ErrorCode::AttemptCapExhausted: return "AttemptCapExhausted";
    case ErrorCode::OneClassEmpty: return "OneClassEmpty";
    case ErrorCode::MissingTarget: return "MissingTarget";
    case ErrorCode::MissingCategory: return "MissingCategory";
    case ErrorCode::SingleClassOnly: return "SingleClassOnly";
  }
  return "UnknownError";
}

bool is_backend_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BackendUnavailable:
    case ErrorCode::Timeout:
    case ErrorCode::ProtocolError:
    case ErrorCode::MissingBothAnswerTokens:
    case ErrorCode::ExhaustedRetries:
    case ErrorCode::AnnotatorUnavailable:
      return true;
    default:
      return false;
  }
}

}  // namespace vqr
