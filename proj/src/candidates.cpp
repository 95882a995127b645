// SPDX-License-Identifier: Apache-2.0
#include "ttpo/candidates.hpp"

#include <future>
#include <sstream>

#include "ttpo/error.hpp"
#include "ttpo/rng.hpp"

namespace ttpo {

const Candidate& CandidateSet::by_id(int id) const {
    for (const auto& c : candidates) {
        if (c.id == id) return c;
    }
    throw Error(ErrorCode::InvalidInput, "no candidate with id " + std::to_string(id));
}

void check_noise_scale(double s) {
    if (!(s >= kMinNoiseScale && s <= kMaxNoiseScale)) {
        std::ostringstream os;
        os << "noise scale " << s << " outside [" << kMinNoiseScale << ", " << kMaxNoiseScale << "]";
        throw Error(ErrorCode::NoiseScaleOutOfBounds, os.str());
    }
}

Candidate invert_and_regenerate(const Field& y0, const VelocityField& model, double s, std::size_t steps,
                                std::uint64_t seed, RunLog* log) {
    check_noise_scale(s);
    if (steps == 0) throw Error(ErrorCode::InvalidSchedule, "steps must be >= 1");
    const Field eps = gaussian_field(y0.height(), y0.width(), seed);
    const Field noisy = forward_noise(y0, s, eps);
    Candidate c;
    c.field = sample(model, TimeSchedule::uniform(steps), noisy, s, log);
    c.source = model.descriptor();
    c.noise_scale = s;
    c.seed = seed;
    return c;
}

CandidateSet build_candidate_set(const Field& y0, const std::vector<const VelocityField*>& models,
                                 const std::vector<double>& scales, std::size_t steps, std::uint64_t seed,
                                 bool parallel, RunLog* log) {
    if (models.empty()) throw Error(ErrorCode::InvalidConfig, "at least one model is required");
    if (scales.empty()) throw Error(ErrorCode::InvalidConfig, "at least one noise scale is required");
    for (double s : scales) check_noise_scale(s);
    for (const auto* m : models) {
        if (m == nullptr) throw Error(ErrorCode::InvalidConfig, "null model");
    }

    CandidateSet set;
    set.restored = y0;
    set.candidates.push_back(Candidate{0, y0, "original", std::nullopt, std::nullopt});

    struct Job {
        int id;
        const VelocityField* model;
        double scale;
    };
    std::vector<Job> jobs;
    for (const auto* m : models) {
        for (double s : scales) jobs.push_back({static_cast<int>(jobs.size()) + 1, m, s});
    }

    auto run = [&](const Job& job) {
        Candidate c = invert_and_regenerate(y0, *job.model, job.scale, steps,
                                            derive_seed(seed, static_cast<std::uint64_t>(job.id)), log);
        c.id = job.id;
        return c;
    };

    if (parallel) {
        std::vector<std::future<Candidate>> pending;
        pending.reserve(jobs.size());
        for (const auto& job : jobs) pending.push_back(std::async(std::launch::async, run, job));
        for (auto& f : pending) set.candidates.push_back(f.get());
    } else {
        for (const auto& job : jobs) set.candidates.push_back(run(job));
    }
    return set;
}

}  // namespace ttpo
