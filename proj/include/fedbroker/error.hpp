#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedbroker {

enum class ErrorCode {
  InvalidArgument,
  DuplicateId,
  EmptyField,
  UnknownId,
  TemplateError,
  MissingDescription,
  MissingSnippets,
  EmptySnippet,
  WrongSnippetCount,
  TransportFailure,
  BackendUnavailable,
  ContextOverflow,
  EmptyRegistry,
  AllFiltered,
  ResourceWithoutSnippets,
  UnknownResource,
  DegenerateVector,
  Unparseable,
  OutOfRange,
  InsufficientNavigationalSnippets,
  EmptyGeneration,
  LengthMismatch,
  Empty,
  MissingQrels,
  ParseError,
  DanglingReference,
  CountMismatch,
  ChecksumMismatch,
  IoError,
  ConfigError,
  Timeout,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::MissingDescription: return "MissingDescription";
    case ErrorCode::MissingSnippets: return "MissingSnippets";
    case ErrorCode::EmptySnippet: return "EmptySnippet";
    case ErrorCode::WrongSnippetCount: return "WrongSnippetCount";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::EmptyRegistry: return "EmptyRegistry";
    case ErrorCode::AllFiltered: return "AllFiltered";
    case ErrorCode::ResourceWithoutSnippets: return "ResourceWithoutSnippets";
    case ErrorCode::UnknownResource: return "UnknownResource";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::Unparseable: return "Unparseable";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InsufficientNavigationalSnippets: return "InsufficientNavigationalSnippets";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::MissingQrels: return "MissingQrels";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Timeout: return "Timeout";
  }
  return "Unknown";
}

/// Every domain failure in the library surfaces as this exception. `code()`
/// identifies the failure kind; `what()` carries the offending value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fedbroker
