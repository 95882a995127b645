// SPDX-License-Identifier: Apache-2.0
//
// Real 2-D fields, their orthonormal spectra, and Gaussian frequency masks.
//
// The transform pair is unitary: both directions scale by 1/sqrt(h*w), so
// energy is preserved and the adjoint of fft2 is ifft2. Every loss gradient
// in the guidance code relies on that.
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ttpo {

using Complex = std::complex<double>;

class Field {
public:
    Field() = default;
    /// Zero-filled field. Throws InvalidInput when a dimension is zero.
    Field(std::size_t height, std::size_t width, double fill = 0.0);
    /// Row-major data; length must equal height * width and all values must be finite.
    Field(std::size_t height, std::size_t width, std::vector<double> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool same_shape(const Field& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    double& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
    double operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const noexcept;
    double sup_norm() const noexcept;
    double l2_norm() const noexcept;

    Field& operator+=(const Field& rhs);
    Field& operator-=(const Field& rhs);
    Field& operator*=(double s);

    friend Field operator+(Field lhs, const Field& rhs) { return lhs += rhs; }
    friend Field operator-(Field lhs, const Field& rhs) { return lhs -= rhs; }
    friend Field operator*(Field lhs, double s) { return lhs *= s; }
    friend Field operator*(double s, Field rhs) { return rhs *= s; }
    friend bool operator==(const Field&, const Field&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

class Spectrum {
public:
    Spectrum() = default;
    Spectrum(std::size_t height, std::size_t width);
    Spectrum(std::size_t height, std::size_t width, std::vector<Complex> coefficients);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return coeffs_.size(); }
    bool same_shape(const Spectrum& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    Complex& operator()(std::size_t row, std::size_t col) { return coeffs_[row * width_ + col]; }
    Complex operator()(std::size_t row, std::size_t col) const { return coeffs_[row * width_ + col]; }
    Complex& operator[](std::size_t i) { return coeffs_[i]; }
    Complex operator[](std::size_t i) const { return coeffs_[i]; }

    std::span<Complex> coefficients() noexcept { return coeffs_; }
    std::span<const Complex> coefficients() const noexcept { return coeffs_; }

    /// Sum of squared moduli.
    double energy() const noexcept;

    Spectrum& operator+=(const Spectrum& rhs);
    Spectrum& operator-=(const Spectrum& rhs);
    Spectrum& operator*=(double s);
    friend Spectrum operator+(Spectrum lhs, const Spectrum& rhs) { return lhs += rhs; }
    friend Spectrum operator-(Spectrum lhs, const Spectrum& rhs) { return lhs -= rhs; }
    friend Spectrum operator*(double s, Spectrum rhs) { return rhs *= s; }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<Complex> coeffs_;
};

/// Per-bin weights in [0, 1] over the unshifted FFT grid (DC at index 0).
class FreqMask {
public:
    FreqMask() = default;
    FreqMask(std::size_t height, std::size_t width, std::vector<double> weights, double cutoff);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    double cutoff() const noexcept { return cutoff_; }
    double operator()(std::size_t row, std::size_t col) const { return weights_[row * width_ + col]; }
    double operator[](std::size_t i) const { return weights_[i]; }
    std::span<const double> weights() const noexcept { return weights_; }

    /// The highpass partner: 1 - w at every bin.
    FreqMask complement() const;
    /// Mask of all ones (no frequency split); cutoff reported as +inf.
    static FreqMask all_pass(std::size_t height, std::size_t width);

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> weights_;
    double cutoff_ = 0.0;
};

Spectrum fft2(const Field& f);
/// Real part of the inverse transform. Imaginary residue is dropped.
Field ifft2(const Spectrum& s);

/// Radial frequency of a bin, scaled so that the per-axis Nyquist frequency is 1.
double normalized_radius(std::size_t row, std::size_t col, std::size_t height, std::size_t width);
/// exp(-rho^2 / (2 D0^2)).
double gaussian_lowpass_weight(double rho, double cutoff);
/// Throws InvalidConfig unless cutoff > 0 and finite. Cutoffs above 1 are allowed.
FreqMask gaussian_lowpass_mask(std::size_t height, std::size_t width, double cutoff);

Spectrum apply_mask(const Spectrum& s, const FreqMask& m);

struct FrequencySplit {
    Spectrum low;
    Spectrum high;
};
FrequencySplit split_frequency(const Field& f, const FreqMask& lowpass);

/// Mean over bins of |d.real| + |d.imag|.
double spectral_l1(const Spectrum& a, const Spectrum& b);
double field_mse(const Field& a, const Field& b);
/// Mean over bins of |a - b|^2.
double field_mse(const Spectrum& a, const Spectrum& b);
/// Spectra are compared as real vectors of (re, im) pairs.
double cosine_sim(const Spectrum& a, const Spectrum& b);
double cosine_sim(const Field& a, const Field& b);

}  // namespace ttpo
