// SPDX-License-Identifier: Apache-2.0
//
// Bundled synthetic testbed: a smooth "restored" field, three generative
// models standing in for pretrained backbones, and a scorer trio.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "ttpo/field.hpp"
#include "ttpo/rng.hpp"
#include "ttpo/selection.hpp"
#include "ttpo/velocity.hpp"

namespace ttpo {

/// Default correction scale for the testbed, in g_unit() multiples. Picked
/// with `ttpo gsweep` on the bundled config.
inline constexpr double kTestbedGUnits = 10.0;

struct Testbed {
    Field ground_truth;
    Field restored;  // y0: a lowpass-degraded ground truth
    std::shared_ptr<const GaussianMixtureField> guidance_model;  // also the last candidate model
    std::vector<std::shared_ptr<const VelocityField>> candidate_models;
    ScorerList scorers;

    std::vector<const VelocityField*> model_ptrs() const;
};

/// Deterministic in (size, seed). The default seed reproduces the bundled testbed.
Testbed make_testbed(std::size_t size = 32, std::uint64_t seed = kDefaultSeed);

/// Writes the testbed fields and a ready-to-run config.json into `dir`.
/// Returns the config path.
std::filesystem::path write_testbed(const std::filesystem::path& dir, std::size_t size = 32,
                                    std::uint64_t seed = kDefaultSeed);

}  // namespace ttpo
