// SPDX-License-Identifier: Apache-2.0
//
// Reward-conditioned denoising. At each step the clean prediction
// x0hat = x_t + t v is scored against the restored field (lowpass MSE) and
// the win/lose pair (highpass distances inside a log-sigmoid), and the state
// moves along the Euler direction minus g times the loss gradient. The
// velocity is held constant when differentiating, so d(loss)/d(x_t) equals
// d(loss)/d(x0hat).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttpo/error.hpp"
#include "ttpo/field.hpp"
#include "ttpo/rng.hpp"
#include "ttpo/velocity.hpp"

namespace ttpo {

enum class Distance { L1, Cosine };
std::string_view to_string(Distance d);
Distance distance_from_string(std::string_view s);

struct GuidanceConfig {
    double alpha = 0.5;
    double beta = 1.0;
    double g = 204.8;  // 10 g_unit()s at 32x32 with 50 steps, picked by gsweep on the testbed
    double cutoff = 0.9;  // D0
    double t1 = 0.7;
    double t2 = 0.1;
    std::size_t steps = 50;
    double t_min = kDefaultTMin;
    Distance distance = Distance::L1;
    std::uint64_t seed = kDefaultSeed;

    // Ablation switches. All on is the full method.
    bool preference = true;       // include the preference term at all
    bool frequency_split = true;  // highpass for preference, lowpass for structure
    bool stage_gating = true;     // structural-only / both / preference-only stages

    /// Throws InvalidConfig on any violated constraint.
    void validate() const;
};

/// g expressed in units of (element count) * (uniform step width). With this
/// unit the correction acts like an extra velocity term whose strength does
/// not depend on resolution or step count.
double g_unit(std::size_t elements, std::size_t steps);

struct ActiveTerms {
    bool structural = false;
    bool preference = false;
    friend bool operator==(const ActiveTerms&, const ActiveTerms&) = default;
};

/// (T1, 1] structural only; (T2, T1] both; [0, T2] preference only.
class StagePolicy {
public:
    StagePolicy(double t1, double t2, bool gating = true, bool preference = true);
    explicit StagePolicy(const GuidanceConfig& cfg)
        : StagePolicy(cfg.t1, cfg.t2, cfg.stage_gating, cfg.preference) {}
    ActiveTerms active_terms(double t) const;

private:
    double t1_, t2_;
    bool gating_, preference_;
};

struct ValueAndGrad {
    double value = 0.0;
    Field grad;
};

/// Highpass distance (L1) or similarity (cosine) between a and b, with the
/// exact gradient with respect to a. `highpass` weights the spectra.
ValueAndGrad reward_distance(const Field& a, const Field& b, const FreqMask& highpass, Distance distance);
ValueAndGrad reward_distance(const Field& a, const Field& b, const GuidanceConfig& cfg);

/// Signed so that larger is more similar: -d for L1, the similarity for cosine.
double reward_from_distance(double d, Distance distance);

struct PreferenceLoss {
    double loss = 0.0;
    Field grad;
    double d_win = 0.0;
    double d_lose = 0.0;
};

/// -log sigmoid(beta * (reward_w - reward_l)) with its gradient in x0hat.
PreferenceLoss ttpo_loss(const Field& x0hat, const Field& yw, const Field& yl, const GuidanceConfig& cfg);
/// Mean squared difference of the lowpass spectra, with gradient.
ValueAndGrad structural_loss(const Field& x0hat, const Field& y0, const FreqMask& lowpass);
ValueAndGrad structural_loss(const Field& x0hat, const Field& y0, const GuidanceConfig& cfg);

struct GuidanceTerms {
    std::optional<double> ttpo;        // absent when inactive at t
    std::optional<double> structural;  // absent when inactive at t
    double ttpo_value = 0.0;           // always evaluated, for curves
    double structural_value = 0.0;
    double d_win = 0.0;
    double d_lose = 0.0;
};

struct CombinedGuidance {
    double loss = 0.0;
    Field grad;
    GuidanceTerms terms;
};

/// Precomputed masks and reference spectra for one (y0, yw, yl, cfg).
class GuidanceObjective {
public:
    GuidanceObjective(Field y0, Field yw, Field yl, GuidanceConfig cfg);

    const GuidanceConfig& config() const noexcept { return cfg_; }
    const FreqMask& lowpass() const noexcept { return low_; }
    const FreqMask& highpass() const noexcept { return high_; }

    ValueAndGrad structural(const Field& x0hat) const;
    PreferenceLoss preference(const Field& x0hat) const;
    /// alpha * L_ttpo + L_r restricted to the terms active at t.
    CombinedGuidance combined(const Field& x0hat, double t) const;

private:
    ValueAndGrad structural_from(const Spectrum& x) const;
    PreferenceLoss preference_from(const Spectrum& x) const;

    GuidanceConfig cfg_;
    std::size_t height_, width_;
    FreqMask low_, high_;
    Spectrum y0_low_, yw_high_, yl_high_;
    StagePolicy policy_;
};

CombinedGuidance combined_guidance(const Field& x0hat, const Field& y0, const Field& yw, const Field& yl, double t,
                                   const GuidanceConfig& cfg);

struct RunRow {
    double t = 0.0;
    double l_ttpo = 0.0;
    double l_r = 0.0;
    double d_win = 0.0;
    double d_lose = 0.0;
    double grad_norm = 0.0;
};

struct RunRecord {
    GuidanceConfig config;
    std::vector<RunRow> rows;
    std::optional<Field> terminal;
    std::vector<std::string> warnings;

    /// header t,L_ttpo,L_r,d_win,d_lose,grad_norm; 17 significant digits.
    std::string curves_csv() const;
};

class GuidanceDiverged : public Error {
public:
    GuidanceDiverged(const std::string& message, RunRecord record)
        : Error(ErrorCode::GuidanceDiverged, message), record_(std::move(record)) {}
    const RunRecord& record() const noexcept { return record_; }

private:
    RunRecord record_;
};

struct StepResult {
    Field x_next;
    RunRow row;
};

/// One guided Euler step. Throws Error(GuidanceDiverged) when x_next is not finite.
StepResult guided_step(const Field& x, double t, double t_next, const VelocityField& field,
                       const GuidanceObjective& objective, RunLog* log = nullptr);
StepResult guided_step(const Field& x, double t, double t_next, const VelocityField& field, const Field& y0,
                       const Field& yw, const Field& yl, const GuidanceConfig& cfg, RunLog* log = nullptr);

struct OptimizeResult {
    Field output;
    RunRecord record;
};

/// Starting noise for optimize(): gaussian_field(h, w, cfg.seed).
Field initial_noise(std::size_t height, std::size_t width, const GuidanceConfig& cfg);

/// Full guided trajectory from seeded noise at t = 1 to t = 0 over a uniform
/// schedule of cfg.steps. Throws GuidanceDiverged carrying the partial record.
OptimizeResult optimize(const Field& y0, const Field& yw, const Field& yl, const VelocityField& field,
                        const GuidanceConfig& cfg, RunLog* log = nullptr);

/// The g = 0 reference: plain sampling from the same seeded noise.
Field unguided_sample(std::size_t height, std::size_t width, const VelocityField& field, const GuidanceConfig& cfg,
                      RunLog* log = nullptr);

}  // namespace ttpo
