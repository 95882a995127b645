// SPDX-License-Identifier: Apache-2.0
//
// Flow-matching velocity fields and the Euler sampler.
//
// Conventions: x_t = (1 - t) x_0 + t eps, so t = 1 is pure noise and t = 0 is
// data. Denoising steps from t to t' < t with x_{t'} = x_t + (t - t') v, which
// makes the conditional velocity v = x_0 - eps and the clean prediction
// x_0 = x_t + t v.
#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ttpo/field.hpp"

namespace ttpo {

inline constexpr double kDefaultTMin = 1e-3;

/// Thread-safe append-only list of warnings raised during a run.
class RunLog {
public:
    void warn(std::string message);
    std::vector<std::string> entries() const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> entries_;
};

class VelocityField {
public:
    virtual ~VelocityField() = default;

    /// v(x, t). Requires t_min() <= t <= 1.
    virtual Field evaluate(const Field& x, double t) const = 0;
    virtual std::string descriptor() const = 0;
    virtual double t_min() const { return kDefaultTMin; }
};

struct MixtureComponent {
    double weight = 1.0;
    Field mean;
    double stddev = 1.0;
};

/// Isotropic Gaussian mixture prior over fields; the velocity is the exact
/// marginal flow-matching velocity of that prior.
class GaussianMixtureField final : public VelocityField {
public:
    GaussianMixtureField(std::string id, std::vector<MixtureComponent> components, double t_min = kDefaultTMin);

    Field evaluate(const Field& x, double t) const override;
    std::string descriptor() const override { return id_; }
    double t_min() const override { return t_min_; }

    /// E[x_0 | x_t = x].
    Field posterior_mean(const Field& x, double t) const;
    /// log p(x) under the prior itself (t = 0).
    double log_density(const Field& x) const;
    /// Component responsibilities of x at time t.
    std::vector<double> responsibilities(const Field& x, double t) const;

    const std::vector<MixtureComponent>& components() const noexcept { return components_; }
    std::size_t height() const noexcept { return components_.front().mean.height(); }
    std::size_t width() const noexcept { return components_.front().mean.width(); }

private:
    void check_time(const Field& x, double t) const;

    std::string id_;
    std::vector<MixtureComponent> components_;
    double t_min_;
};

/// Exact marginal velocity when the data distribution is the uniform
/// empirical measure over a finite set of atoms.
class EmpiricalDatasetField final : public VelocityField {
public:
    EmpiricalDatasetField(std::string id, std::vector<Field> atoms, double t_min = kDefaultTMin);

    Field evaluate(const Field& x, double t) const override;
    std::string descriptor() const override { return id_; }
    double t_min() const override { return t_min_; }

    Field posterior_mean(const Field& x, double t) const;
    std::vector<double> responsibilities(const Field& x, double t) const;
    const std::vector<Field>& atoms() const noexcept { return atoms_; }

private:
    std::string id_;
    std::vector<Field> atoms_;
    double t_min_;
};

/// Strictly decreasing knots ending at exactly 0.
class TimeSchedule {
public:
    explicit TimeSchedule(std::vector<double> knots);
    /// Knots (steps - i) / steps for i = 0..steps.
    static TimeSchedule uniform(std::size_t steps);

    /// start_t followed by every knot strictly below it (1e-9 tolerance).
    TimeSchedule truncated(double start_t) const;

    std::size_t steps() const noexcept { return knots_.size() - 1; }
    const std::vector<double>& knots() const noexcept { return knots_; }
    double operator[](std::size_t i) const { return knots_[i]; }

private:
    std::vector<double> knots_;
};

/// (1 - s) x0 + s eps.
Field forward_noise(const Field& x0, double s, const Field& eps);
/// x + (t - t_next) v.
Field euler_step(const Field& x, double t, double t_next, const Field& v);
/// Clamp t into [t_min, 1]; logs a warning when clamping up.
double clamp_time(double t, double t_min, RunLog* log);
/// x + t v(x, t), t clamped to the field's t_min.
Field predict_clean(const Field& x, double t, const VelocityField& field, RunLog* log = nullptr);

/// Euler-integrates from start_t down to 0 over `schedule` truncated at start_t.
Field sample(const VelocityField& field, const TimeSchedule& schedule, const Field& x_start, double start_t,
             RunLog* log = nullptr);

}  // namespace ttpo
