// SPDX-License-Identifier: Apache-2.0
#include "ttpo/guidance.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ttpo {

std::string_view to_string(Distance d) { return d == Distance::Cosine ? "cosine" : "l1"; }

Distance distance_from_string(std::string_view s) {
    if (s == "l1") return Distance::L1;
    if (s == "cosine") return Distance::Cosine;
    throw Error(ErrorCode::InvalidConfig, "unknown distance '" + std::string(s) + "'");
}

void GuidanceConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be > 0");
    if (!(g >= 0.0) || !std::isfinite(g)) fail("g must be >= 0");
    if (!(cutoff > 0.0 && cutoff <= 1.0)) fail("cutoff D0 must lie in (0, 1]");
    if (!(t2 >= 0.0 && t2 < t1 && t1 <= 1.0)) fail("stage bounds need 0 <= T2 < T1 <= 1");
    if (steps == 0) fail("steps must be >= 1");
    if (!(t_min > 0.0 && t_min < 1.0)) fail("t_min must lie in (0, 1)");
}

double g_unit(std::size_t elements, std::size_t steps) {
    return static_cast<double>(elements) / static_cast<double>(steps);
}

// ---------------------------------------------------------------------------
// StagePolicy

StagePolicy::StagePolicy(double t1, double t2, bool gating, bool preference)
    : t1_(t1), t2_(t2), gating_(gating), preference_(preference) {
    if (!(t2 >= 0.0 && t2 < t1 && t1 <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "stage bounds need 0 <= T2 < T1 <= 1");
    }
}

ActiveTerms StagePolicy::active_terms(double t) const {
    if (!preference_) return {true, false};
    if (!gating_) return {true, true};
    if (t > t1_) return {true, false};
    if (t > t2_) return {true, true};
    return {false, true};
}

// ---------------------------------------------------------------------------
// Loss kernels on spectra. Gradients are accumulated in the spectral domain
// and mapped back with the inverse transform, which is the adjoint of fft2.

namespace {

struct SpectralGrad {
    double value = 0.0;
    Spectrum grad;
};

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Field to_field_gradient(const Spectrum& g) {
    for (const auto& c : g.coefficients()) {
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
            throw Error(ErrorCode::GuidanceDiverged, "non-finite gradient");
        }
    }
    return ifft2(g);
}

Spectrum checked_fft(const Field& f) {
    if (!f.all_finite()) throw Error(ErrorCode::GuidanceDiverged, "non-finite clean prediction");
    return fft2(f);
}

SpectralGrad l1_distance(const Spectrum& x, const FreqMask& h, const Spectrum& ref) {
    const double inv_n = 1.0 / static_cast<double>(x.size());
    SpectralGrad out{0.0, Spectrum(x.height(), x.width())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex d = x[i] * h[i] - ref[i];
        out.value += std::abs(d.real()) + std::abs(d.imag());
        out.grad[i] = inv_n * h[i] * Complex(sign(d.real()), sign(d.imag()));
    }
    out.value *= inv_n;
    return out;
}

SpectralGrad cosine_similarity(const Spectrum& x, const FreqMask& h, const Spectrum& ref) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex u = x[i] * h[i];
        dot += u.real() * ref[i].real() + u.imag() * ref[i].imag();
        nu += std::norm(u);
        nv += std::norm(ref[i]);
    }
    if (nu == 0.0 && nv == 0.0) throw Error(ErrorCode::UndefinedSimilarity, "cosine of two zero spectra");
    SpectralGrad out{0.0, Spectrum(x.height(), x.width())};
    if (nu == 0.0 || nv == 0.0) return out;
    const double norm_u = std::sqrt(nu), norm_v = std::sqrt(nv);
    const double c = dot / (norm_u * norm_v);
    out.value = c;
    // d c / d u = v / (|u||v|) - c u / |u|^2, then chained through the mask.
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex u = x[i] * h[i];
        out.grad[i] = h[i] * (ref[i] / (norm_u * norm_v) - (c / nu) * u);
    }
    return out;
}

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
double logistic(double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

double reward_from_distance(double d, Distance distance) { return distance == Distance::L1 ? -d : d; }

// ---------------------------------------------------------------------------
// GuidanceObjective

namespace {

FreqMask lowpass_for(std::size_t h, std::size_t w, const GuidanceConfig& cfg) {
    return cfg.frequency_split ? gaussian_lowpass_mask(h, w, cfg.cutoff) : FreqMask::all_pass(h, w);
}

FreqMask highpass_for(const FreqMask& low, const GuidanceConfig& cfg) {
    return cfg.frequency_split ? low.complement() : FreqMask::all_pass(low.height(), low.width());
}

}  // namespace

GuidanceObjective::GuidanceObjective(Field y0, Field yw, Field yl, GuidanceConfig cfg)
    : cfg_(std::move(cfg)),
      height_(y0.height()),
      width_(y0.width()),
      policy_(cfg_) {
    cfg_.validate();
    if (!y0.same_shape(yw) || !y0.same_shape(yl)) {
        throw Error(ErrorCode::InvalidInput, "y0, yw and yl must share one shape");
    }
    low_ = lowpass_for(height_, width_, cfg_);
    high_ = highpass_for(low_, cfg_);
    y0_low_ = apply_mask(fft2(y0), low_);
    yw_high_ = apply_mask(fft2(yw), high_);
    yl_high_ = apply_mask(fft2(yl), high_);
}

ValueAndGrad GuidanceObjective::structural_from(const Spectrum& x) const {
    const double inv_n = 1.0 / static_cast<double>(x.size());
    double value = 0.0;
    Spectrum grad(x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex d = x[i] * low_[i] - y0_low_[i];
        value += std::norm(d);
        grad[i] = 2.0 * inv_n * low_[i] * d;
    }
    return {value * inv_n, to_field_gradient(grad)};
}

PreferenceLoss GuidanceObjective::preference_from(const Spectrum& x) const {
    const SpectralGrad win = cfg_.distance == Distance::L1 ? l1_distance(x, high_, yw_high_)
                                                           : cosine_similarity(x, high_, yw_high_);
    const SpectralGrad lose = cfg_.distance == Distance::L1 ? l1_distance(x, high_, yl_high_)
                                                            : cosine_similarity(x, high_, yl_high_);
    const double z = cfg_.beta * (reward_from_distance(win.value, cfg_.distance) -
                                  reward_from_distance(lose.value, cfg_.distance));
    PreferenceLoss out;
    out.loss = softplus(-z);
    out.d_win = win.value;
    out.d_lose = lose.value;
    if (!std::isfinite(out.loss)) throw Error(ErrorCode::GuidanceDiverged, "non-finite preference loss");

    // d loss / d z = -sigmoid(-z); d z / d x = beta (grad r_w - grad r_l), r = -d for L1.
    const double orient = cfg_.distance == Distance::L1 ? -1.0 : 1.0;
    const double scale = -logistic(-z) * cfg_.beta * orient;
    Spectrum grad(x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = scale * (win.grad[i] - lose.grad[i]);
    out.grad = to_field_gradient(grad);
    return out;
}

ValueAndGrad GuidanceObjective::structural(const Field& x0hat) const {
    if (x0hat.height() != height_ || x0hat.width() != width_) {
        throw Error(ErrorCode::InvalidInput, "clean prediction shape mismatch");
    }
    return structural_from(checked_fft(x0hat));
}

PreferenceLoss GuidanceObjective::preference(const Field& x0hat) const {
    if (x0hat.height() != height_ || x0hat.width() != width_) {
        throw Error(ErrorCode::InvalidInput, "clean prediction shape mismatch");
    }
    return preference_from(checked_fft(x0hat));
}

CombinedGuidance GuidanceObjective::combined(const Field& x0hat, double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidInput, "t must lie in [0, 1]");
    if (x0hat.height() != height_ || x0hat.width() != width_) {
        throw Error(ErrorCode::InvalidInput, "clean prediction shape mismatch");
    }
    const Spectrum x = checked_fft(x0hat);
    const ValueAndGrad lr = structural_from(x);
    const PreferenceLoss lp = preference_from(x);
    const ActiveTerms active = policy_.active_terms(t);

    CombinedGuidance out;
    out.grad = Field(height_, width_);
    out.terms.structural_value = lr.value;
    out.terms.ttpo_value = lp.loss;
    out.terms.d_win = lp.d_win;
    out.terms.d_lose = lp.d_lose;
    if (active.preference) {
        out.terms.ttpo = lp.loss;
        out.loss += cfg_.alpha * lp.loss;
        for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += cfg_.alpha * lp.grad[i];
    }
    if (active.structural) {
        out.terms.structural = lr.value;
        out.loss += lr.value;
        out.grad += lr.grad;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Free-function forms

ValueAndGrad reward_distance(const Field& a, const Field& b, const FreqMask& highpass, Distance distance) {
    if (!a.same_shape(b) || a.height() != highpass.height() || a.width() != highpass.width()) {
        throw Error(ErrorCode::InvalidInput, "reward_distance shape mismatch");
    }
    const Spectrum ref = apply_mask(fft2(b), highpass);
    const Spectrum x = fft2(a);
    const SpectralGrad s = distance == Distance::L1 ? l1_distance(x, highpass, ref) : cosine_similarity(x, highpass, ref);
    return {s.value, to_field_gradient(s.grad)};
}

ValueAndGrad reward_distance(const Field& a, const Field& b, const GuidanceConfig& cfg) {
    if (!a.same_shape(b)) throw Error(ErrorCode::InvalidInput, "reward_distance shape mismatch");
    const FreqMask low = lowpass_for(a.height(), a.width(), cfg);
    return reward_distance(a, b, highpass_for(low, cfg), cfg.distance);
}

PreferenceLoss ttpo_loss(const Field& x0hat, const Field& yw, const Field& yl, const GuidanceConfig& cfg) {
    if (!x0hat.same_shape(yw) || !x0hat.same_shape(yl)) throw Error(ErrorCode::InvalidInput, "ttpo_loss shape mismatch");
    return GuidanceObjective(x0hat, yw, yl, cfg).preference(x0hat);
}

ValueAndGrad structural_loss(const Field& x0hat, const Field& y0, const FreqMask& lowpass) {
    if (!x0hat.same_shape(y0) || x0hat.height() != lowpass.height() || x0hat.width() != lowpass.width()) {
        throw Error(ErrorCode::InvalidInput, "structural_loss shape mismatch");
    }
    const Spectrum x = fft2(x0hat);
    const Spectrum y = apply_mask(fft2(y0), lowpass);
    const double inv_n = 1.0 / static_cast<double>(x.size());
    double value = 0.0;
    Spectrum grad(x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex d = x[i] * lowpass[i] - y[i];
        value += std::norm(d);
        grad[i] = 2.0 * inv_n * lowpass[i] * d;
    }
    return {value * inv_n, to_field_gradient(grad)};
}

ValueAndGrad structural_loss(const Field& x0hat, const Field& y0, const GuidanceConfig& cfg) {
    if (!x0hat.same_shape(y0)) throw Error(ErrorCode::InvalidInput, "structural_loss shape mismatch");
    return structural_loss(x0hat, y0, lowpass_for(x0hat.height(), x0hat.width(), cfg));
}

CombinedGuidance combined_guidance(const Field& x0hat, const Field& y0, const Field& yw, const Field& yl, double t,
                                   const GuidanceConfig& cfg) {
    return GuidanceObjective(y0, yw, yl, cfg).combined(x0hat, t);
}

// ---------------------------------------------------------------------------
// Guided sampling

std::string RunRecord::curves_csv() const {
    std::ostringstream os;
    os << "t,L_ttpo,L_r,d_win,d_lose,grad_norm\n";
    os << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.t << ',' << r.l_ttpo << ',' << r.l_r << ',' << r.d_win << ',' << r.d_lose << ',' << r.grad_norm
           << '\n';
    }
    return os.str();
}

StepResult guided_step(const Field& x, double t, double t_next, const VelocityField& field,
                       const GuidanceObjective& objective, RunLog* log) {
    if (!(t_next < t) || t_next < 0.0 || t > 1.0) {
        throw Error(ErrorCode::InvalidSchedule, "guided_step requires 0 <= t_next < t <= 1");
    }
    const double te = clamp_time(t, field.t_min(), log);
    // v is a plain value from here on: nothing below differentiates through it.
    const Field v = field.evaluate(x, te);
    Field x0hat(x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i) x0hat[i] = x[i] + te * v[i];

    const CombinedGuidance cg = objective.combined(x0hat, t);
    const double g = objective.config().g;
    const double dt = t - t_next;

    StepResult out{Field(x.height(), x.width()), {}};
    for (std::size_t i = 0; i < x.size(); ++i) out.x_next[i] = x[i] + dt * v[i] - g * cg.grad[i];

    out.row.t = t;
    out.row.l_ttpo = cg.terms.ttpo_value;
    out.row.l_r = cg.terms.structural_value;
    out.row.d_win = cg.terms.d_win;
    out.row.d_lose = cg.terms.d_lose;
    out.row.grad_norm = cg.grad.l2_norm();

    if (!out.x_next.all_finite()) {
        std::ostringstream os;
        os << "guided step diverged at t=" << t;
        throw Error(ErrorCode::GuidanceDiverged, os.str());
    }
    return out;
}

StepResult guided_step(const Field& x, double t, double t_next, const VelocityField& field, const Field& y0,
                       const Field& yw, const Field& yl, const GuidanceConfig& cfg, RunLog* log) {
    return guided_step(x, t, t_next, field, GuidanceObjective(y0, yw, yl, cfg), log);
}

Field initial_noise(std::size_t height, std::size_t width, const GuidanceConfig& cfg) {
    return gaussian_field(height, width, cfg.seed);
}

OptimizeResult optimize(const Field& y0, const Field& yw, const Field& yl, const VelocityField& field,
                        const GuidanceConfig& cfg, RunLog* log) {
    const GuidanceObjective objective(y0, yw, yl, cfg);
    const TimeSchedule schedule = TimeSchedule::uniform(cfg.steps);

    RunRecord record;
    record.config = cfg;
    record.rows.reserve(cfg.steps);
    RunLog local_log;
    RunLog* sink = log ? log : &local_log;

    Field x = initial_noise(y0.height(), y0.width(), cfg);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        try {
            StepResult step = guided_step(x, schedule[i], schedule[i + 1], field, objective, sink);
            record.rows.push_back(step.row);
            x = std::move(step.x_next);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::GuidanceDiverged) throw;
            record.warnings = sink->entries();
            std::ostringstream os;
            os << "guidance diverged at step " << i << " (t=" << schedule[i] << "): " << e.what();
            throw GuidanceDiverged(os.str(), std::move(record));
        }
    }
    record.terminal = x;
    record.warnings = sink->entries();
    return {std::move(x), std::move(record)};
}

Field unguided_sample(std::size_t height, std::size_t width, const VelocityField& field, const GuidanceConfig& cfg,
                      RunLog* log) {
    return sample(field, TimeSchedule::uniform(cfg.steps), initial_noise(height, width, cfg), 1.0, log);
}

}  // namespace ttpo
