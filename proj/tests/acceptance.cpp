// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite P1-P9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Runtime budgets are part of each verdict.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "ttpo/candidates.hpp"
#include "ttpo/error.hpp"
#include "ttpo/guidance.hpp"
#include "ttpo/selection.hpp"
#include "ttpo/testbed.hpp"
#include "ttpo/velocity.hpp"

using namespace ttpo;
using ttpo::test::finite_difference;
using ttpo::test::l1_margin;
using ttpo::test::random_field;
using ttpo::test::relative_error;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

struct Criterion {
    const char* id;
    const char* title;
    double budget_s;
    std::function<void(Verdict&)> body;
};

// ---------------------------------------------------------------------------
// P1

void p1(Verdict& v) {
    std::mt19937_64 gen(101);
    double knot_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Field x0 = random_field(8, 8, gen);
        const Field eps = random_field(8, 8, gen);
        const TimeSchedule s = TimeSchedule::uniform(10 + 5 * static_cast<std::size_t>(trial));
        Field x = eps;
        for (std::size_t i = 0; i + 1 < s.knots().size(); ++i) {
            x = euler_step(x, s[i], s[i + 1], x0 - eps);
            knot_err = std::max(knot_err, (x - forward_noise(x0, s[i + 1], eps)).sup_norm());
        }
    }

    std::uniform_real_distribution<double> ut(0.01, 1.0), us(0.2, 2.0), uw(0.1, 1.0);
    std::uniform_int_distribution<int> uk(1, 4);
    double post_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = uk(gen);
        std::vector<double> w(k);
        double total = 0.0;
        for (double& x : w) total += (x = uw(gen));
        std::vector<MixtureComponent> comps;
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
            const double weight = j + 1 == k ? 1.0 - acc : w[j] / total;
            acc += weight;
            comps.push_back({weight, random_field(4, 4, gen), us(gen)});
        }
        const GaussianMixtureField prior("p", comps);
        const double t = ut(gen);
        const Field x = random_field(4, 4, gen, 1.5);

        // Closed-form conditioning, written out independently.
        std::vector<double> logp;
        for (const auto& c : comps) {
            const double var = std::pow((1.0 - t) * c.stddev, 2) + t * t;
            double q = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) q += std::pow(x[i] - (1.0 - t) * c.mean[i], 2);
            logp.push_back(std::log(c.weight) - 0.5 * static_cast<double>(x.size()) * std::log(var) - q / (2.0 * var));
        }
        const double top = *std::max_element(logp.begin(), logp.end());
        double z = 0.0;
        for (double& l : logp) z += (l = std::exp(l - top));
        Field expected(4, 4);
        for (std::size_t j = 0; j < comps.size(); ++j) {
            const auto& c = comps[j];
            const double var = std::pow((1.0 - t) * c.stddev, 2) + t * t;
            const double gain = (1.0 - t) * c.stddev * c.stddev / var;
            for (std::size_t i = 0; i < x.size(); ++i) {
                expected[i] += logp[j] / z * (c.mean[i] + gain * (x[i] - (1.0 - t) * c.mean[i]));
            }
        }
        post_err = std::max(post_err, (predict_clean(x, t, prior) - expected).sup_norm());
    }
    v.detail << "max knot error " << knot_err << ", max posterior error " << post_err << " over 100 cases";
    v.require(knot_err <= 1e-12, "knot error <= 1e-12");
    v.require(post_err <= 1e-10, "posterior error <= 1e-10");
}

// ---------------------------------------------------------------------------
// P2

void p2(Verdict& v) {
    bool partition = true;
    for (double d0 : {0.05, 0.3, 0.9}) {
        for (std::size_t n : {7, 16, 32}) {
            const FreqMask low = gaussian_lowpass_mask(n, n + 1, d0);
            const FreqMask high = low.complement();
            for (std::size_t i = 0; i < low.weights().size(); ++i) partition = partition && low[i] + high[i] == 1.0;
        }
    }
    std::mt19937_64 gen(102);
    std::uniform_int_distribution<int> dim(1, 64);
    double round_trip = 0.0, parseval = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Field f = random_field(dim(gen), dim(gen), gen);
        const Spectrum s = fft2(f);
        round_trip = std::max(round_trip, (ifft2(s) - f).sup_norm());
        const double e = f.l2_norm() * f.l2_norm();
        parseval = std::max(parseval, std::abs(s.energy() - e) / e);
    }
    const double mask_err = std::abs(gaussian_lowpass_mask(20, 20, 0.9)(0, 9) - std::exp(-0.5));
    v.detail << "partition " << (partition ? "exact" : "inexact") << ", round trip " << round_trip << ", Parseval "
             << parseval << ", mask(rho=0.9) error " << mask_err;
    v.require(partition, "partition of unity exact");
    v.require(round_trip <= 1e-10, "round trip <= 1e-10");
    v.require(parseval <= 1e-10, "Parseval <= 1e-10");
    v.require(mask_err <= 1e-12, "mask value within 1e-12");
}

// ---------------------------------------------------------------------------
// P3

constexpr double kFdStep = 1e-6;
constexpr double kMinMargin = 1e-5;

void p3(Verdict& v) {
    std::mt19937_64 gen(103);
    const GuidanceConfig base;
    const FreqMask high = gaussian_lowpass_mask(8, 8, base.cutoff).complement();
    std::size_t skipped = 0;

    // Draws until `n` instances pass the L1-kink margin test, returning the worst error.
    auto run = [&](int n, const std::function<std::optional<double>()>& instance) {
        double worst = 0.0;
        for (int done = 0; done < n;) {
            if (const auto err = instance()) {
                worst = std::max(worst, *err);
                ++done;
            } else {
                ++skipped;
            }
        }
        return worst;
    };
    auto far_from_kinks = [&](const Field& x, std::initializer_list<const Field*> refs) {
        for (const Field* r : refs) {
            if (l1_margin(x, *r, high) < kMinMargin) return false;
        }
        return true;
    };

    std::vector<std::pair<std::string, double>> worst;
    for (Distance dist : {Distance::L1, Distance::Cosine}) {
        GuidanceConfig cfg = base;
        cfg.distance = dist;
        const std::string tag = std::string(to_string(dist));
        worst.emplace_back("distance/" + tag, run(100, [&]() -> std::optional<double> {
            const Field a = random_field(8, 8, gen), b = random_field(8, 8, gen);
            if (dist == Distance::L1 && !far_from_kinks(a, {&b})) return std::nullopt;
            const Field fd = finite_difference([&](const Field& p) { return reward_distance(p, b, cfg).value; }, a, kFdStep);
            return relative_error(reward_distance(a, b, cfg).grad, fd);
        }));
        worst.emplace_back("ttpo/" + tag, run(100, [&]() -> std::optional<double> {
            const Field x = random_field(8, 8, gen), yw = random_field(8, 8, gen), yl = random_field(8, 8, gen);
            if (dist == Distance::L1 && !far_from_kinks(x, {&yw, &yl})) return std::nullopt;
            const Field fd = finite_difference([&](const Field& p) { return ttpo_loss(p, yw, yl, cfg).loss; }, x, kFdStep);
            return relative_error(ttpo_loss(x, yw, yl, cfg).grad, fd);
        }));
    }
    worst.emplace_back("structural", run(100, [&]() -> std::optional<double> {
        const Field x = random_field(8, 8, gen), y0 = random_field(8, 8, gen);
        const Field fd = finite_difference([&](const Field& p) { return structural_loss(p, y0, base).value; }, x, kFdStep);
        return relative_error(structural_loss(x, y0, base).grad, fd);
    }));
    int stage = 0;
    worst.emplace_back("combined", run(102, [&]() -> std::optional<double> {
        const Field x = random_field(8, 8, gen), y0 = random_field(8, 8, gen);
        const Field yw = random_field(8, 8, gen), yl = random_field(8, 8, gen);
        if (!far_from_kinks(x, {&yw, &yl})) return std::nullopt;
        const double t = std::array{0.9, 0.5, 0.05}[stage++ % 3];
        const GuidanceObjective obj(y0, yw, yl, base);
        const Field fd = finite_difference([&](const Field& p) { return obj.combined(p, t).loss; }, x, kFdStep);
        return relative_error(obj.combined(x, t).grad, fd);
    }));
    worst.emplace_back("stop-gradient step", run(102, [&]() -> std::optional<double> {
        GuidanceConfig cfg = base;
        cfg.g = 1.0;
        const GaussianMixtureField field("p", {{0.5, random_field(8, 8, gen), 0.4}, {0.5, random_field(8, 8, gen), 0.7}});
        const Field x = random_field(8, 8, gen), y0 = random_field(8, 8, gen);
        const Field yw = random_field(8, 8, gen), yl = random_field(8, 8, gen);
        const double t = std::array{0.9, 0.5, 0.05}[stage++ % 3];
        const Field vel = field.evaluate(x, t);
        if (!far_from_kinks(x + t * vel, {&yw, &yl})) return std::nullopt;
        const GuidanceObjective obj(y0, yw, yl, cfg);
        const Field next = guided_step(x, t, t - 0.02, field, obj).x_next;
        const Field correction = (x + 0.02 * vel - next) * (1.0 / cfg.g);
        const Field fd = finite_difference([&](const Field& p) { return obj.combined(p + t * vel, t).loss; }, x, kFdStep);
        return relative_error(correction, fd);
    }));

    double overall = 0.0;
    for (const auto& [name, err] : worst) {
        v.detail << name << " " << err << "; ";
        v.require(err <= 1e-6, name + " relative error <= 1e-6");
        overall = std::max(overall, err);
    }
    v.detail << "worst " << overall << ", " << skipped << " draws skipped near L1 kinks";
}

// ---------------------------------------------------------------------------
// P4

void p4(Verdict& v) {
    std::mt19937_64 gen(104);
    std::uniform_int_distribution<int> un(2, 8), coarse(0, 3);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ua(0.01, 100.0), ub(-50.0, 50.0);
    int agree = 0, invariant = 0;
    double zs_mean = 0.0, zs_std = 0.0, reward_err = 0.0;

    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = static_cast<std::size_t>(un(gen));
        const bool ties = trial % 4 == 0;
        std::vector<std::vector<double>> rows(3, std::vector<double>(n));
        for (auto& row : rows) {
            do {
                for (double& x : row) x = ties ? coarse(gen) : nd(gen) * std::pow(10.0, nd(gen));
            } while (std::all_of(row.begin(), row.end(), [&](double x) { return x == row[0]; }));
        }
        std::vector<int> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        const ScoreMatrix m = score_matrix_from_rows({"a", "b", "c"}, ids, rows);
        for (const auto& z : m.normalized) {
            const double mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
            double var = 0.0;
            for (double x : z) var += (x - mean) * (x - mean) / static_cast<double>(n);
            zs_mean = std::max(zs_mean, std::abs(mean));
            zs_std = std::max(zs_std, std::abs(std::sqrt(var) - 1.0));
        }

        // Rewards against an independent mean of Z-scores; selection against
        // enumeration over those rewards.
        const std::vector<double> r = hybrid_reward(m);
        for (std::size_t i = 0; i < n; ++i) {
            double expected = 0.0;
            for (const auto& row : rows) {
                const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(n);
                double var = 0.0;
                for (double x : row) var += (x - mean) * (x - mean) / static_cast<double>(n);
                expected += (row[i] - mean) / std::sqrt(var) / 3.0;
            }
            reward_err = std::max(reward_err, std::abs(r[i] - expected));
        }
        int win = -1, lose = -1;
        for (std::size_t i = 0; i < n; ++i) {
            bool top = true, bottom = true;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                if (r[j] > r[i] || (r[j] == r[i] && j < i)) top = false;
                if (r[j] < r[i] || (r[j] == r[i] && j < i)) bottom = false;
            }
            if (top) win = static_cast<int>(i);
            if (bottom) lose = static_cast<int>(i);
        }
        const PreferencePair p = select_pair(r, ids);
        if (win == lose) {
            agree += p.degenerate && p.win_id == 0 && p.lose_id == 1;
        } else {
            agree += p.win_id == win && p.lose_id == lose;
        }

        std::vector<std::vector<double>> cont(3, std::vector<double>(n));
        for (auto& row : cont) {
            for (double& x : row) x = nd(gen);
        }
        auto moved = cont;
        const double a = ua(gen), b = ub(gen);
        for (double& x : moved[trial % 3]) x = a * x + b;
        const auto pa = select_pair(hybrid_reward(score_matrix_from_rows({"a", "b", "c"}, ids, cont)), ids);
        const auto pb = select_pair(hybrid_reward(score_matrix_from_rows({"a", "b", "c"}, ids, moved)), ids);
        invariant += pa.win_id == pb.win_id && pa.lose_id == pb.lose_id;
    }
    v.detail << "brute force " << agree << "/200, affine invariance " << invariant << "/200, Z-score |mean| "
             << zs_mean << ", |std-1| " << zs_std << ", reward error " << reward_err;
    v.require(agree == 200, "selection equals enumeration");
    v.require(invariant == 200, "affine invariance");
    v.require(zs_mean <= 1e-10 && zs_std <= 1e-10, "Z-score moments within 1e-10");
    v.require(reward_err <= 1e-10, "hybrid reward equals mean Z-score");
}

// ---------------------------------------------------------------------------
// P5

void p5(Verdict& v) {
    std::mt19937_64 gen(105);
    std::normal_distribution<double> nd;
    std::vector<std::string> names{"q0", "q1", "q2", "q3", "q4", "q5"};
    std::vector<ScoredGroup> groups;
    for (int g = 0; g < 50; ++g) {
        std::vector<std::vector<double>> rows(6, std::vector<double>(16));
        for (auto& row : rows) {
            for (double& x : row) x = nd(gen);
        }
        std::vector<int> ids(16);
        std::iota(ids.begin(), ids.end(), 0);
        groups.push_back({score_matrix_from_rows(names, ids, rows), g % 16, (g + 5) % 16});
    }
    const MatchReport r = metric_match_experiment(groups);
    v.detail << "triples " << r.triple_count << ", per scorer " << r.triples_per_scorer << ", denominator "
             << r.denominator;
    v.require(r.triple_count == 20, "C(6,3) = 20");
    v.require(r.triples_per_scorer == 10, "each scorer in 10 triples");
    v.require(r.denominator == 500, "50 groups give /500");
    for (std::size_t m : r.matches) v.require(m <= r.denominator, "match count bounded by denominator");
}

// ---------------------------------------------------------------------------
// P6-P8: paired runs on the bundled testbed

struct PairedRun {
    double dw_guided, dl_guided, dw_plain;
    double reward_full, reward_lr_only;
    double low_mse_guided, low_mse_plain;
};

const std::vector<PairedRun>& paired_runs() {
    static const std::vector<PairedRun> runs = [] {
        const Testbed bed = make_testbed();
        std::vector<PairedRun> out;
        for (std::uint64_t i = 0; i < 20; ++i) {
            const std::uint64_t seed = derive_seed(kDefaultSeed, 1000 + i);
            const CandidateSet set =
                build_candidate_set(bed.restored, bed.model_ptrs(), {0.1, 0.15, 0.2, 0.25, 0.3}, 50, seed);
            const ScoreMatrix m = build_score_matrix(bed.scorers, set);
            const PreferencePair pair = select_pair(hybrid_reward(m), m.candidate_ids);
            const Field& yw = set.by_id(pair.win_id).field;
            const Field& yl = set.by_id(pair.lose_id).field;

            GuidanceConfig full;
            full.seed = seed;
            GuidanceConfig plain = full;
            plain.g = 0.0;
            GuidanceConfig lr_only = full;
            lr_only.preference = false;

            const Field guided = optimize(bed.restored, yw, yl, *bed.guidance_model, full).output;
            const Field unguided = unguided_sample(32, 32, *bed.guidance_model, plain);
            const Field ablated = optimize(bed.restored, yw, yl, *bed.guidance_model, lr_only).output;

            std::vector<const Field*> pool;
            for (const auto& c : set.candidates) pool.push_back(&c.field);
            const PoolReward reward(bed.scorers, pool);
            const FreqMask low = gaussian_lowpass_mask(32, 32, full.cutoff);

            out.push_back({reward_distance(guided, yw, full).value, reward_distance(guided, yl, full).value,
                           reward_distance(unguided, yw, full).value, reward(guided), reward(ablated),
                           structural_loss(guided, bed.restored, low).value,
                           structural_loss(unguided, bed.restored, low).value});
        }
        return out;
    }();
    return runs;
}

void p6(Verdict& v) {
    int closer = 0, ordered = 0;
    for (const auto& r : paired_runs()) {
        closer += r.dw_guided < r.dw_plain;
        ordered += r.dl_guided > r.dw_guided;
    }
    v.detail << "d_win(guided) < d_win(g=0) in " << closer << "/20, d_lose > d_win in " << ordered << "/20";
    v.require(closer >= 18, "guided closer to y_w in >= 18/20");
    v.require(ordered >= 18, "d_lose > d_win in >= 18/20");
}

void p7(Verdict& v) {
    int wins = 0;
    double full = 0.0, lr = 0.0;
    for (const auto& r : paired_runs()) {
        wins += r.reward_full > r.reward_lr_only;
        full += r.reward_full / 20.0;
        lr += r.reward_lr_only / 20.0;
    }
    v.detail << "full > L_r-only in " << wins << "/20 (mean reward " << full << " vs " << lr << ")";
    v.require(wins >= 14, "full wins in >= 70% of runs");
}

void p8(Verdict& v) {
    int held = 0;
    double worst = 0.0;
    for (const auto& r : paired_runs()) {
        held += r.low_mse_guided <= 2.0 * r.low_mse_plain;
        worst = std::max(worst, r.low_mse_guided / r.low_mse_plain);
    }
    v.detail << "lowpass MSE within 2x of g=0 in " << held << "/20 (worst ratio " << worst << ")";
    v.require(held >= 18, "structure held in >= 18/20");
}

// ---------------------------------------------------------------------------
// P9

void p9(Verdict& v) {
    const Testbed bed = make_testbed();
    GuidanceConfig cfg;
    cfg.g = 0.0;
    const Field out = optimize(bed.restored, bed.ground_truth, bed.restored, *bed.guidance_model, cfg).output;
    const Field plain =
        sample(*bed.guidance_model, TimeSchedule::uniform(cfg.steps), gaussian_field(32, 32, cfg.seed), 1.0);
    const bool identical = out == plain;

    const StagePolicy policy(0.7, 0.1);
    const bool gating = policy.active_terms(1.0) == ActiveTerms{true, false} &&
                        policy.active_terms(std::nextafter(0.7, 1.0)) == ActiveTerms{true, false} &&
                        policy.active_terms(0.7) == ActiveTerms{true, true} &&
                        policy.active_terms(std::nextafter(0.1, 1.0)) == ActiveTerms{true, true} &&
                        policy.active_terms(0.1) == ActiveTerms{false, true} &&
                        policy.active_terms(0.0) == ActiveTerms{false, true};

    bool rejected = false;
    try {
        build_candidate_set(bed.restored, bed.model_ptrs(), {0.2, 0.4}, 50, kDefaultSeed);
    } catch (const Error& e) {
        rejected = e.code() == ErrorCode::NoiseScaleOutOfBounds;
    }
    v.detail << "g=0 " << (identical ? "bit-identical" : "differs") << ", gating " << (gating ? "exact" : "wrong")
             << ", scale 0.4 " << (rejected ? "rejected" : "accepted");
    v.require(identical, "g = 0 bit-identical to sampling");
    v.require(gating, "stage intervals");
    v.require(rejected, "scale 0.4 rejected");
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"P1", "scheduler identities", 5, p1},
        {"P2", "frequency machinery", 5, p2},
        {"P3", "gradient oracles", 30, p3},
        {"P4", "selection exactness", 10, p4},
        {"P5", "match-experiment combinatorics", 5, p5},
        {"P6", "guidance efficacy", 600, p6},
        {"P7", "ablation direction", 900, p7},
        {"P8", "structural consistency", 600, p8},
        {"P9", "null reductions", 5, p9},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Verdict v;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.body(v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << " [exception: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > c.budget_s) v.require(false, "runtime budget " + std::to_string(c.budget_s) + " s");
        failed += !v.pass;
        std::printf("%s %s  %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.title, v.detail.str().c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
