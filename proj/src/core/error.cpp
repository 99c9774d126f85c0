// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/core/error.hpp"

namespace kalbert {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyLabelSet: return "EmptyLabelSet";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::VocabTooSmall: return "VocabTooSmall";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::MalformedSequence: return "MalformedSequence";
    case ErrorCode::InvalidVocabFile: return "InvalidVocabFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidUtf8: return "InvalidUtf8";
    case ErrorCode::SegmentEmptyAfterTruncation: return "SegmentEmptyAfterTruncation";
    case ErrorCode::TokenIdOutOfRange: return "TokenIdOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::ShardMismatch: return "ShardMismatch";
    case ErrorCode::CorruptShard: return "CorruptShard";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::AllObjectivesDisabled: return "AllObjectivesDisabled";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace kalbert
