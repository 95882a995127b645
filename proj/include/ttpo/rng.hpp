// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "ttpo/field.hpp"

namespace ttpo {

inline constexpr std::uint64_t kDefaultSeed = 666666;

/// Counter-based seed derivation: stream `counter` of `master` never depends
/// on how many other streams were drawn.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter);

/// Field of i.i.d. standard normal values from a 64-bit Mersenne Twister.
Field gaussian_field(std::size_t height, std::size_t width, std::uint64_t seed);
Field gaussian_field(std::size_t height, std::size_t width, std::mt19937_64& gen);

}  // namespace ttpo
