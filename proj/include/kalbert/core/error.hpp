// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kalbert {

enum class ErrorCode {
  ShapeMismatch,
  NonFinite,
  EmptyLabelSet,
  LabelOutOfRange,
  NotScalarLoss,
  InvalidProbability,
  VocabTooSmall,
  IdOutOfRange,
  MalformedSequence,
  InvalidVocabFile,
  IoError,
  InvalidUtf8,
  SegmentEmptyAfterTruncation,
  TokenIdOutOfRange,
  InvalidConfig,
  StepOutOfRange,
  NonFiniteGradient,
  ShardMismatch,
  CorruptShard,
  IndexOutOfRange,
  NonFiniteLoss,
  VersionMismatch,
  CorruptCheckpoint,
  MissingTensor,
  AllObjectivesDisabled,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace kalbert
