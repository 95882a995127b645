// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttpo {

enum class ErrorCode {
    InvalidInput,
    InvalidConfig,
    InvalidSchedule,
    NoiseScaleOutOfBounds,
    TooFewCandidates,
    UndefinedSimilarity,
    GuidanceDiverged,
    SelectionPending,
    RunDirConflict,
    Io,
};

/// Stable machine-readable name, e.g. "noise-scale-out-of-bounds".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ttpo
