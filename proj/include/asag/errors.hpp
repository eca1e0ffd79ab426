#pragma once

#include <stdexcept>
#include <string>

namespace asag {

enum class ErrorKind {
  MalformedRecord,
  UnknownLabel,
  DuplicateKey,
  EmptyText,
  InvalidSpec,
  EmptyCorpus,
  FractionOutOfRange,
  BackendMismatch,
  EmptyValidation,
  CorruptCheckpoint,
  UnknownBackend,
  MissingQuestion,
  LineageConflict,
  TooFewPoints,
  MissingFraction,
  LengthMismatch,
  Empty,
  EmptyMatrix,
  TooFewRanks,
  UnknownQuestionType,
  EmptySamples,
  EmptyAnswer,
  ClientUnavailable,
  UnknownRecordId,
  DuplicateDecision,
  IoError,
  UsageError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::EmptyText: return "EmptyText";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::FractionOutOfRange: return "FractionOutOfRange";
    case ErrorKind::BackendMismatch: return "BackendMismatch";
    case ErrorKind::EmptyValidation: return "EmptyValidation";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::UnknownBackend: return "UnknownBackend";
    case ErrorKind::MissingQuestion: return "MissingQuestion";
    case ErrorKind::LineageConflict: return "LineageConflict";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::MissingFraction: return "MissingFraction";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::Empty: return "Empty";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::TooFewRanks: return "TooFewRanks";
    case ErrorKind::UnknownQuestionType: return "UnknownQuestionType";
    case ErrorKind::EmptySamples: return "EmptySamples";
    case ErrorKind::EmptyAnswer: return "EmptyAnswer";
    case ErrorKind::ClientUnavailable: return "ClientUnavailable";
    case ErrorKind::UnknownRecordId: return "UnknownRecordId";
    case ErrorKind::DuplicateDecision: return "DuplicateDecision";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UsageError: return "UsageError";
  }
  return "Unknown";
}

// Single exception type carrying a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace asag
