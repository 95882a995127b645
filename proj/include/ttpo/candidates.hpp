// SPDX-License-Identifier: Apache-2.0
//
// Candidate preference set: the restored field plus regenerated variants
// obtained by partially noising it and denoising with each velocity model.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ttpo/field.hpp"
#include "ttpo/velocity.hpp"

namespace ttpo {

inline constexpr double kMinNoiseScale = 0.1;
inline constexpr double kMaxNoiseScale = 0.3;

struct Candidate {
    int id = 0;
    Field field;
    std::string source;               // model descriptor, or "original"
    std::optional<double> noise_scale;
    std::optional<std::uint64_t> seed;
};

struct CandidateSet {
    Field restored;
    std::vector<Candidate> candidates;  // candidates[0] is the original

    std::size_t size() const noexcept { return candidates.size(); }
    const Candidate& by_id(int id) const;
};

/// Throws NoiseScaleOutOfBounds outside [0.1, 0.3].
void check_noise_scale(double s);

Candidate invert_and_regenerate(const Field& y0, const VelocityField& model, double s, std::size_t steps,
                                std::uint64_t seed, RunLog* log = nullptr);

/// Candidate 0 is y0; then one candidate per (model, scale), models outer.
/// Candidate k >= 1 uses derive_seed(seed, k). Generation fans out over
/// threads when `parallel` is set; the result is identical either way.
CandidateSet build_candidate_set(const Field& y0, const std::vector<const VelocityField*>& models,
                                 const std::vector<double>& scales, std::size_t steps, std::uint64_t seed,
                                 bool parallel = true, RunLog* log = nullptr);

}  // namespace ttpo
