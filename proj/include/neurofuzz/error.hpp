// Copyright 2026 The neurofuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NEUROFUZZ_ERROR_HPP
#define NEUROFUZZ_ERROR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace neurofuzz {

enum class ErrorCode {
  InvalidGrammar,
  InvalidConfig,
  CorpusTooSmall,
  EmptyCorpus,
  IndexOutOfAlphabet,
  TextTooShort,
  ShapeMismatch,
  MissingCache,
  NonFiniteLoss,
  CorruptCheckpoint,
  MaxLenExceeded,
  RetryBudgetExhausted,
  NotDivisible,
  MalformedHeader,
  TruncatedBlockTable,
  BadModuleIndex,
  SpawnFailed,
  Timeout,
  NoLogProduced,
  EmptyInput,
  MissingArtifacts,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidGrammar: return "InvalidGrammar";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::IndexOutOfAlphabet: return "IndexOutOfAlphabet";
    case ErrorCode::TextTooShort: return "TextTooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingCache: return "MissingCache";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::MaxLenExceeded: return "MaxLenExceeded";
    case ErrorCode::RetryBudgetExhausted: return "RetryBudgetExhausted";
    case ErrorCode::NotDivisible: return "NotDivisible";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedBlockTable: return "TruncatedBlockTable";
    case ErrorCode::BadModuleIndex: return "BadModuleIndex";
    case ErrorCode::SpawnFailed: return "SpawnFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NoLogProduced: return "NoLogProduced";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// The single exception type thrown by the library. `code()` identifies the
/// failure class; `offset()` is set for errors tied to a byte position in an
/// input file (drcov logs, checkpoints).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Error(ErrorCode code, const std::string& message, std::uint64_t offset)
      : std::runtime_error(std::string(to_string(code)) + ": " + message +
                           " (at byte offset " + std::to_string(offset) + ")"),
        code_(code),
        offset_(offset) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> offset_;
};

}  // namespace neurofuzz

#endif  // NEUROFUZZ_ERROR_HPP
