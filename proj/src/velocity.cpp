// SPDX-License-Identifier: Apache-2.0
#include "ttpo/velocity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ttpo/error.hpp"

namespace ttpo {

// ---------------------------------------------------------------------------
// RunLog

void RunLog::warn(std::string message) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(message));
}

std::vector<std::string> RunLog::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::size_t RunLog::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

namespace {

double squared_distance_scaled(const Field& x, const Field& mean, double scale) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - scale * mean[i];
        s += d * d;
    }
    return s;
}

// Normalizes log-weights in place into probabilities.
void softmax_inplace(std::vector<double>& logw) {
    const double top = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (double& v : logw) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : logw) v /= total;
}

void require_time(double t, double t_min) {
    if (!(t >= t_min && t <= 1.0)) {
        std::ostringstream os;
        os << "velocity evaluated at t=" << t << " outside [" << t_min << ", 1]";
        throw Error(ErrorCode::InvalidInput, os.str());
    }
}

void require_t_min(double t_min) {
    if (!(t_min > 0.0 && t_min < 1.0)) throw Error(ErrorCode::InvalidConfig, "t_min must lie in (0, 1)");
}

}  // namespace

// ---------------------------------------------------------------------------
// GaussianMixtureField

GaussianMixtureField::GaussianMixtureField(std::string id, std::vector<MixtureComponent> components, double t_min)
    : id_(std::move(id)), components_(std::move(components)), t_min_(t_min) {
    require_t_min(t_min);
    if (components_.empty()) throw Error(ErrorCode::InvalidConfig, "mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.weight > 0.0 && c.weight <= 1.0)) {
            throw Error(ErrorCode::InvalidConfig, "mixture weight outside (0, 1]");
        }
        if (!(c.stddev > 0.0) || !std::isfinite(c.stddev)) {
            throw Error(ErrorCode::InvalidConfig, "mixture stddev must be positive");
        }
        if (!c.mean.same_shape(components_.front().mean) || c.mean.size() == 0) {
            throw Error(ErrorCode::InvalidConfig, "mixture means must share one non-empty shape");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::InvalidConfig, "mixture weights must sum to 1");
}

void GaussianMixtureField::check_time(const Field& x, double t) const {
    require_time(t, t_min_);
    if (!x.same_shape(components_.front().mean)) {
        throw Error(ErrorCode::InvalidInput, "field shape does not match mixture '" + id_ + "'");
    }
}

std::vector<double> GaussianMixtureField::responsibilities(const Field& x, double t) const {
    check_time(x, t);
    const double dim = static_cast<double>(x.size());
    const double keep = 1.0 - t;
    std::vector<double> logw;
    logw.reserve(components_.size());
    for (const auto& c : components_) {
        // x_t | k ~ N((1 - t) mu_k, ((1 - t)^2 sigma_k^2 + t^2) I)
        const double var = keep * keep * c.stddev * c.stddev + t * t;
        logw.push_back(std::log(c.weight) - 0.5 * dim * std::log(var) -
                       squared_distance_scaled(x, c.mean, keep) / (2.0 * var));
    }
    softmax_inplace(logw);
    return logw;
}

Field GaussianMixtureField::posterior_mean(const Field& x, double t) const {
    const auto resp = responsibilities(x, t);
    const double keep = 1.0 - t;
    Field out(x.height(), x.width());
    for (std::size_t k = 0; k < components_.size(); ++k) {
        if (resp[k] == 0.0) continue;
        const auto& c = components_[k];
        const double sig2 = c.stddev * c.stddev;
        const double gain = keep * sig2 / (keep * keep * sig2 + t * t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] += resp[k] * (c.mean[i] + gain * (x[i] - keep * c.mean[i]));
        }
    }
    return out;
}

Field GaussianMixtureField::evaluate(const Field& x, double t) const {
    Field v = posterior_mean(x, t);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - x[i]) / t;
    return v;
}

double GaussianMixtureField::log_density(const Field& x) const {
    if (!x.same_shape(components_.front().mean)) {
        throw Error(ErrorCode::InvalidInput, "field shape does not match mixture '" + id_ + "'");
    }
    const double dim = static_cast<double>(x.size());
    std::vector<double> terms;
    terms.reserve(components_.size());
    for (const auto& c : components_) {
        const double var = c.stddev * c.stddev;
        terms.push_back(std::log(c.weight) - 0.5 * dim * std::log(2.0 * std::numbers::pi * var) -
                        squared_distance_scaled(x, c.mean, 1.0) / (2.0 * var));
    }
    const double top = *std::max_element(terms.begin(), terms.end());
    double total = 0.0;
    for (double v : terms) total += std::exp(v - top);
    return top + std::log(total);
}

// ---------------------------------------------------------------------------
// EmpiricalDatasetField

EmpiricalDatasetField::EmpiricalDatasetField(std::string id, std::vector<Field> atoms, double t_min)
    : id_(std::move(id)), atoms_(std::move(atoms)), t_min_(t_min) {
    require_t_min(t_min);
    if (atoms_.empty()) throw Error(ErrorCode::InvalidConfig, "dataset needs at least one atom");
    for (const auto& a : atoms_) {
        if (!a.same_shape(atoms_.front()) || a.size() == 0) {
            throw Error(ErrorCode::InvalidConfig, "dataset atoms must share one non-empty shape");
        }
    }
}

std::vector<double> EmpiricalDatasetField::responsibilities(const Field& x, double t) const {
    require_time(t, t_min_);
    if (!x.same_shape(atoms_.front())) {
        throw Error(ErrorCode::InvalidInput, "field shape does not match dataset '" + id_ + "'");
    }
    const double keep = 1.0 - t;
    std::vector<double> logw;
    logw.reserve(atoms_.size());
    for (const auto& a : atoms_) logw.push_back(-squared_distance_scaled(x, a, keep) / (2.0 * t * t));
    softmax_inplace(logw);
    return logw;
}

Field EmpiricalDatasetField::posterior_mean(const Field& x, double t) const {
    const auto resp = responsibilities(x, t);
    Field out(x.height(), x.width());
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
        if (resp[k] == 0.0) continue;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += resp[k] * atoms_[k][i];
    }
    return out;
}

Field EmpiricalDatasetField::evaluate(const Field& x, double t) const {
    Field v = posterior_mean(x, t);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - x[i]) / t;
    return v;
}

// ---------------------------------------------------------------------------
// TimeSchedule

TimeSchedule::TimeSchedule(std::vector<double> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) throw Error(ErrorCode::InvalidSchedule, "schedule needs at least one step");
    if (knots_.front() > 1.0 || knots_.back() != 0.0) {
        throw Error(ErrorCode::InvalidSchedule, "schedule must start at or below 1 and end at exactly 0");
    }
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (!(knots_[i] < knots_[i - 1])) throw Error(ErrorCode::InvalidSchedule, "knots must strictly decrease");
    }
}

TimeSchedule TimeSchedule::uniform(std::size_t steps) {
    if (steps == 0) throw Error(ErrorCode::InvalidSchedule, "schedule needs at least one step");
    std::vector<double> knots(steps + 1);
    const auto m = static_cast<double>(steps);
    for (std::size_t i = 0; i <= steps; ++i) knots[i] = static_cast<double>(steps - i) / m;
    return TimeSchedule(std::move(knots));
}

TimeSchedule TimeSchedule::truncated(double start_t) const {
    if (!(start_t > 0.0 && start_t <= 1.0)) throw Error(ErrorCode::InvalidSchedule, "start_t must lie in (0, 1]");
    std::vector<double> knots{start_t};
    for (double k : knots_) {
        if (k < start_t - 1e-9) knots.push_back(k);
    }
    return TimeSchedule(std::move(knots));
}

// ---------------------------------------------------------------------------
// Sampler primitives

Field forward_noise(const Field& x0, double s, const Field& eps) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::InvalidConfig, "noise scale must lie in [0, 1]");
    if (!x0.same_shape(eps)) throw Error(ErrorCode::InvalidInput, "forward_noise shape mismatch");
    Field out(x0.height(), x0.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - s) * x0[i] + s * eps[i];
    return out;
}

Field euler_step(const Field& x, double t, double t_next, const Field& v) {
    if (!(t_next < t) || t_next < 0.0 || t > 1.0) {
        throw Error(ErrorCode::InvalidSchedule, "euler_step requires 0 <= t_next < t <= 1");
    }
    if (!x.same_shape(v)) throw Error(ErrorCode::InvalidInput, "euler_step shape mismatch");
    const double dt = t - t_next;
    Field out(x.height(), x.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + dt * v[i];
    return out;
}

double clamp_time(double t, double t_min, RunLog* log) {
    if (t < t_min) {
        if (log) {
            std::ostringstream os;
            os << "t=" << t << " below t_min=" << t_min << "; clamped";
            log->warn(os.str());
        }
        return t_min;
    }
    return std::min(t, 1.0);
}

Field predict_clean(const Field& x, double t, const VelocityField& field, RunLog* log) {
    const double te = clamp_time(t, field.t_min(), log);
    const Field v = field.evaluate(x, te);
    Field out(x.height(), x.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + te * v[i];
    return out;
}

Field sample(const VelocityField& field, const TimeSchedule& schedule, const Field& x_start, double start_t,
             RunLog* log) {
    const TimeSchedule path = schedule.truncated(start_t);
    Field x = x_start;
    for (std::size_t i = 0; i + 1 < path.knots().size(); ++i) {
        const double t = path[i];
        const Field v = field.evaluate(x, clamp_time(t, field.t_min(), log));
        x = euler_step(x, t, path[i + 1], v);
    }
    return x;
}

}  // namespace ttpo
