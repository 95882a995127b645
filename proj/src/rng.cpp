// SPDX-License-Identifier: Apache-2.0
#include "ttpo/rng.hpp"

#include <vector>

namespace ttpo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
    return splitmix64(splitmix64(master) ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

Field gaussian_field(std::size_t height, std::size_t width, std::mt19937_64& gen) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> data(height * width);
    for (double& v : data) v = normal(gen);
    return Field(height, width, std::move(data));
}

Field gaussian_field(std::size_t height, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    return gaussian_field(height, width, gen);
}

}  // namespace ttpo
