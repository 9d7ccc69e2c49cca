// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace molgen {

// Machine-parseable error categories. The CLI prints exactly one
// "error: <category>: <detail>" line and exits nonzero.
enum class ErrorCode {
  UnknownToken,
  SequenceTooLong,
  UnclosedRing,
  UnmatchedParenthesis,
  BondWithoutAtom,
  ValenceExceeded,
  DuplicateBond,
  AromaticOutsideRing,
  ShapeMismatch,
  NonFinite,
  NotScalar,
  WidthMismatch,
  DimensionMismatch,
  NonPSD,
  EmptyDataset,
  EmptySet,
  InsufficientValid,
  NoValidRows,
  NoHypothesis,
  IOFailure,
  VersionMismatch,
  CorruptFile,
  MalformedRow,
  HeaderMismatch,
  ConfigError,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::UnclosedRing: return "UnclosedRing";
    case ErrorCode::UnmatchedParenthesis: return "UnmatchedParenthesis";
    case ErrorCode::BondWithoutAtom: return "BondWithoutAtom";
    case ErrorCode::ValenceExceeded: return "ValenceExceeded";
    case ErrorCode::DuplicateBond: return "DuplicateBond";
    case ErrorCode::AromaticOutsideRing: return "AromaticOutsideRing";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPSD: return "NonPSD";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::InsufficientValid: return "InsufficientValid";
    case ErrorCode::NoValidRows: return "NoValidRows";
    case ErrorCode::NoHypothesis: return "NoHypothesis";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace molgen
