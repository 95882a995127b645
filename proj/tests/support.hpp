// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and independent oracles for the unit tests.
#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <unistd.h>

#include "ttpo/field.hpp"

namespace ttpo::test {

inline Field random_field(std::size_t h, std::size_t w, std::mt19937_64& gen, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(h * w);
    for (double& x : v) x = nd(gen);
    return Field(h, w, std::move(v));
}

/// Textbook O(n^2) DFT with the orthonormal scaling.
inline Spectrum naive_dft(const Field& f, int sign = -1) {
    const std::size_t h = f.height(), w = f.width();
    Spectrum out(h, w);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    const double phase = two_pi * (static_cast<double>(u * r) / static_cast<double>(h) +
                                                   static_cast<double>(v * c) / static_cast<double>(w));
                    acc += f(r, c) * std::polar(1.0, sign * phase);
                }
            }
            out(u, v) = acc / std::sqrt(static_cast<double>(h * w));
        }
    }
    return out;
}

/// Central finite difference of a scalar function of a field, per element.
inline Field finite_difference(const std::function<double(const Field&)>& fn, const Field& x, double h = 1e-6) {
    Field g(x.height(), x.width());
    Field probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = fn(probe);
        probe[i] = orig - h;
        const double down = fn(probe);
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||b||, floor).
inline double relative_error(const Field& a, const Field& b, double floor = 1e-12) {
    return (a - b).l2_norm() / std::max(b.l2_norm(), floor);
}

/// Distance of H*fft(x) - H*fft(ref) from the nearest L1 kink: the smallest
/// |Re| or |Im| among its components, ignoring structural zeros (< 1e-12).
/// Finite differences with step h are only valid when this exceeds ~h.
inline double l1_margin(const Field& x, const Field& ref, const FreqMask& mask) {
    const Spectrum d = apply_mask(fft2(x), mask) - apply_mask(fft2(ref), mask);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : d.coefficients()) {
        for (double v : {std::abs(c.real()), std::abs(c.imag())}) {
            if (v > 1e-12) m = std::min(m, v);
        }
    }
    return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ttpo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace ttpo::test
