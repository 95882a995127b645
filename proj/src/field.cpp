// SPDX-License-Identifier: Apache-2.0
#include "ttpo/field.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "ttpo/error.hpp"

namespace ttpo {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidInput: return "invalid-input";
        case ErrorCode::InvalidConfig: return "invalid-config";
        case ErrorCode::InvalidSchedule: return "invalid-schedule";
        case ErrorCode::NoiseScaleOutOfBounds: return "noise-scale-out-of-bounds";
        case ErrorCode::TooFewCandidates: return "too-few-candidates";
        case ErrorCode::UndefinedSimilarity: return "undefined-similarity";
        case ErrorCode::GuidanceDiverged: return "guidance-diverged";
        case ErrorCode::SelectionPending: return "selection-pending";
        case ErrorCode::RunDirConflict: return "run-dir-conflict";
        case ErrorCode::Io: return "io-error";
    }
    return "unknown";
}

namespace {

void require_dims(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) {
        throw Error(ErrorCode::InvalidInput, "field dimensions must be >= 1");
    }
}

void require_same(bool same, const char* what) {
    if (!same) throw Error(ErrorCode::InvalidInput, std::string("shape mismatch in ") + what);
}

// FFTW planning is not thread-safe; execution through the new-array API is.
// Plans are created once per (height, width, direction) and never destroyed.
class PlanCache {
public:
    fftw_plan get(std::size_t height, std::size_t width, int sign) {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(height, width, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        // Out-of-place, matching how transform() executes it.
        std::vector<Complex> in(height * width), out(height * width);
        fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width),
                                          reinterpret_cast<fftw_complex*>(in.data()),
                                          reinterpret_cast<fftw_complex*>(out.data()), sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void transform(std::vector<Complex>& in, std::vector<Complex>& out, std::size_t height, std::size_t width,
               int sign) {
    fftw_plan plan = plan_cache().get(height, width, sign);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(height * width));
    for (auto& c : out) c *= scale;
}

}  // namespace

// ---------------------------------------------------------------------------
// Field

Field::Field(std::size_t height, std::size_t width, double fill) : height_(height), width_(width) {
    require_dims(height, width);
    if (!std::isfinite(fill)) throw Error(ErrorCode::InvalidInput, "non-finite fill value");
    data_.assign(height * width, fill);
}

Field::Field(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
    require_dims(height, width);
    if (data_.size() != height * width) {
        throw Error(ErrorCode::InvalidInput, "field data length does not match height*width");
    }
    if (!all_finite()) throw Error(ErrorCode::InvalidInput, "field contains non-finite values");
}

bool Field::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Field::sup_norm() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Field::l2_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Field& Field::operator+=(const Field& rhs) {
    require_same(same_shape(rhs), "Field +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
}

Field& Field::operator-=(const Field& rhs) {
    require_same(same_shape(rhs), "Field -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
}

Field& Field::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

// ---------------------------------------------------------------------------
// Spectrum

Spectrum::Spectrum(std::size_t height, std::size_t width) : height_(height), width_(width) {
    require_dims(height, width);
    coeffs_.assign(height * width, Complex{});
}

Spectrum::Spectrum(std::size_t height, std::size_t width, std::vector<Complex> coefficients)
    : height_(height), width_(width), coeffs_(std::move(coefficients)) {
    require_dims(height, width);
    if (coeffs_.size() != height * width) {
        throw Error(ErrorCode::InvalidInput, "spectrum length does not match height*width");
    }
}

double Spectrum::energy() const noexcept {
    double s = 0.0;
    for (const auto& c : coeffs_) s += std::norm(c);
    return s;
}

Spectrum& Spectrum::operator+=(const Spectrum& rhs) {
    require_same(same_shape(rhs), "Spectrum +=");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += rhs.coeffs_[i];
    return *this;
}

Spectrum& Spectrum::operator-=(const Spectrum& rhs) {
    require_same(same_shape(rhs), "Spectrum -=");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= rhs.coeffs_[i];
    return *this;
}

Spectrum& Spectrum::operator*=(double s) {
    for (auto& c : coeffs_) c *= s;
    return *this;
}

// ---------------------------------------------------------------------------
// FreqMask

FreqMask::FreqMask(std::size_t height, std::size_t width, std::vector<double> weights, double cutoff)
    : height_(height), width_(width), weights_(std::move(weights)), cutoff_(cutoff) {
    require_dims(height, width);
    if (weights_.size() != height * width) {
        throw Error(ErrorCode::InvalidInput, "mask length does not match height*width");
    }
    for (double w : weights_) {
        if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::InvalidInput, "mask weight outside [0, 1]");
    }
}

FreqMask FreqMask::complement() const {
    std::vector<double> w(weights_.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 - weights_[i];
    return FreqMask(height_, width_, std::move(w), cutoff_);
}

FreqMask FreqMask::all_pass(std::size_t height, std::size_t width) {
    return FreqMask(height, width, std::vector<double>(height * width, 1.0),
                    std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Transforms

Spectrum fft2(const Field& f) {
    if (f.size() == 0) throw Error(ErrorCode::InvalidInput, "fft2 of an empty field");
    if (!f.all_finite()) throw Error(ErrorCode::InvalidInput, "fft2 input contains non-finite values");
    std::vector<Complex> in(f.values().begin(), f.values().end());
    std::vector<Complex> out(in.size());
    transform(in, out, f.height(), f.width(), FFTW_FORWARD);
    return Spectrum(f.height(), f.width(), std::move(out));
}

Field ifft2(const Spectrum& s) {
    if (s.size() == 0) throw Error(ErrorCode::InvalidInput, "ifft2 of an empty spectrum");
    std::vector<Complex> in(s.coefficients().begin(), s.coefficients().end());
    for (const auto& c : in) {
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
            throw Error(ErrorCode::InvalidInput, "ifft2 input contains non-finite values");
        }
    }
    std::vector<Complex> out(in.size());
    transform(in, out, s.height(), s.width(), FFTW_BACKWARD);
    std::vector<double> re(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) re[i] = out[i].real();
    return Field(s.height(), s.width(), std::move(re));
}

// ---------------------------------------------------------------------------
// Masks

namespace {

// Signed frequency of bin k on an axis of length n, in cycles per sample.
double axis_frequency(std::size_t k, std::size_t n) {
    const auto kk = static_cast<double>(k);
    const auto nn = static_cast<double>(n);
    return (2 * k <= n) ? kk / nn : (kk - nn) / nn;
}

}  // namespace

double normalized_radius(std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
    // Nyquist (0.5 cycles/sample) maps to 1.
    const double fy = axis_frequency(row, height) / 0.5;
    const double fx = axis_frequency(col, width) / 0.5;
    return std::sqrt(fy * fy + fx * fx);
}

double gaussian_lowpass_weight(double rho, double cutoff) {
    return std::exp(-(rho * rho) / (2.0 * cutoff * cutoff));
}

FreqMask gaussian_lowpass_mask(std::size_t height, std::size_t width, double cutoff) {
    if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
        throw Error(ErrorCode::InvalidConfig, "cutoff D0 must be positive and finite");
    }
    require_dims(height, width);
    std::vector<double> w(height * width);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            w[r * width + c] = gaussian_lowpass_weight(normalized_radius(r, c, height, width), cutoff);
        }
    }
    return FreqMask(height, width, std::move(w), cutoff);
}

Spectrum apply_mask(const Spectrum& s, const FreqMask& m) {
    require_same(s.height() == m.height() && s.width() == m.width(), "apply_mask");
    Spectrum out = s;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
    return out;
}

FrequencySplit split_frequency(const Field& f, const FreqMask& lowpass) {
    require_same(f.height() == lowpass.height() && f.width() == lowpass.width(), "split_frequency");
    const Spectrum full = fft2(f);
    Spectrum low(f.height(), f.width());
    Spectrum high(f.height(), f.width());
    for (std::size_t i = 0; i < full.size(); ++i) {
        low[i] = full[i] * lowpass[i];
        // high = full - low keeps low + high == full bit-for-bit.
        high[i] = full[i] - low[i];
    }
    return {std::move(low), std::move(high)};
}

// ---------------------------------------------------------------------------
// Distances

double spectral_l1(const Spectrum& a, const Spectrum& b) {
    require_same(a.same_shape(b), "spectral_l1");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Complex d = a[i] - b[i];
        s += std::abs(d.real()) + std::abs(d.imag());
    }
    return s / static_cast<double>(a.size());
}

double field_mse(const Field& a, const Field& b) {
    require_same(a.same_shape(b), "field_mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double field_mse(const Spectrum& a, const Spectrum& b) {
    require_same(a.same_shape(b), "field_mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double cosine_sim(const Spectrum& a, const Spectrum& b) {
    require_same(a.same_shape(b), "cosine_sim");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
        na += std::norm(a[i]);
        nb += std::norm(b[i]);
    }
    if (na == 0.0 && nb == 0.0) throw Error(ErrorCode::UndefinedSimilarity, "cosine of two zero vectors");
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_sim(const Field& a, const Field& b) {
    require_same(a.same_shape(b), "cosine_sim");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) throw Error(ErrorCode::UndefinedSimilarity, "cosine of two zero vectors");
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace ttpo
