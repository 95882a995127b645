// SPDX-License-Identifier: Apache-2.0
#include "ttpo/testbed.hpp"

#include <cmath>
#include <numbers>

#include "ttpo/error.hpp"
#include "ttpo/field_io.hpp"
#include "ttpo/pipeline.hpp"

namespace ttpo {

namespace fs = std::filesystem;

namespace {

constexpr double kTextureAmplitude = 0.3;
constexpr double kTextureBand = 0.6;   // highpass cutoff that shapes textures
constexpr double kDegradeCutoff = 0.3; // lowpass cutoff that produces y0

Field smooth_base(std::size_t n) {
    Field b(n, n);
    const double two_pi = 2.0 * std::numbers::pi;
    const double nn = static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const double y = static_cast<double>(r), x = static_cast<double>(c);
            const double dy = y - 0.375 * nn, dx = x - 0.625 * nn;
            const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * (0.15 * nn) * (0.15 * nn)));
            b(r, c) = 0.6 * std::cos(two_pi * y / nn) + 0.4 * std::sin(two_pi * 2.0 * x / nn) + blob;
        }
    }
    return b;
}

// Highpass-shaped noise rescaled to a fixed standard deviation.
Field texture(std::size_t n, std::uint64_t seed, double amplitude) {
    const Field white = gaussian_field(n, n, seed);
    const auto parts = split_frequency(white, gaussian_lowpass_mask(n, n, kTextureBand));
    Field t = ifft2(parts.high);
    double mean = 0.0;
    for (double v : t.data()) mean += v;
    mean /= static_cast<double>(t.size());
    double ss = 0.0;
    for (double v : t.data()) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (t[i] - mean) * amplitude / sd;
    return t;
}

struct MixtureSpec {
    std::string id;
    std::vector<Field> means;
    double stddev;
};

struct TestbedParts {
    Field ground_truth;
    Field restored;
    MixtureSpec flux;
    MixtureSpec sd3;
    std::vector<Field> dataset_atoms;
};

TestbedParts make_parts(std::size_t n, std::uint64_t seed) {
    if (n < 4) throw Error(ErrorCode::InvalidConfig, "testbed size must be >= 4");
    TestbedParts p;
    const Field base = smooth_base(n);
    std::uint64_t counter = 0;
    auto next_texture = [&](double amplitude) { return texture(n, derive_seed(seed, counter++), amplitude); };

    p.ground_truth = base + next_texture(kTextureAmplitude);

    // The guidance backbone is broad and carries little detail; the sd3
    // stand-in is tight and detailed and doubles as the quality prior.
    p.flux.id = "mix_flux";
    p.flux.stddev = 0.2;
    for (int k = 0; k < 4; ++k) p.flux.means.push_back(base + next_texture(0.4 * kTextureAmplitude));

    p.sd3.id = "mix_sd3";
    p.sd3.stddev = 0.05;
    for (int k = 0; k < 3; ++k) p.sd3.means.push_back(base + next_texture(kTextureAmplitude));

    for (int k = 0; k < 6; ++k) p.dataset_atoms.push_back(base + next_texture(0.5 * kTextureAmplitude));

    const auto parts = split_frequency(p.ground_truth, gaussian_lowpass_mask(n, n, kDegradeCutoff));
    p.restored = ifft2(parts.low);
    return p;
}

std::shared_ptr<GaussianMixtureField> to_mixture(const MixtureSpec& spec) {
    std::vector<MixtureComponent> comps;
    const double w = 1.0 / static_cast<double>(spec.means.size());
    for (const auto& m : spec.means) comps.push_back({w, m, spec.stddev});
    return std::make_shared<GaussianMixtureField>(spec.id, std::move(comps));
}

}  // namespace

std::vector<const VelocityField*> Testbed::model_ptrs() const {
    std::vector<const VelocityField*> out;
    for (const auto& m : candidate_models) out.push_back(m.get());
    return out;
}

Testbed make_testbed(std::size_t size, std::uint64_t seed) {
    TestbedParts p = make_parts(size, seed);
    Testbed tb;
    tb.ground_truth = p.ground_truth;
    tb.restored = p.restored;
    auto flux = to_mixture(p.flux);
    auto sd3 = to_mixture(p.sd3);
    tb.guidance_model = flux;
    tb.candidate_models = {std::make_shared<EmpiricalDatasetField>("data_sd21", p.dataset_atoms), sd3, flux};
    tb.scorers = {std::make_shared<HfEnergyScorer>(0.9), std::make_shared<NoiseEstimateScorer>(),
                  std::make_shared<MixtureLogLikScorer>(sd3)};
    return tb;
}

fs::path write_testbed(const fs::path& dir, std::size_t size, std::uint64_t seed) {
    const TestbedParts p = make_parts(size, seed);
    fs::create_directories(dir);
    io::write_field(dir / "restored.bin", p.restored);
    io::write_field(dir / "ground_truth.bin", p.ground_truth);

    RunConfig cfg;
    cfg.name = "testbed";
    cfg.input = "restored.bin";
    cfg.seed = seed;

    ModelDecl data;
    data.id = "data_sd21";
    data.type = "dataset";
    data.dir = "data_sd21";
    for (std::size_t i = 0; i < p.dataset_atoms.size(); ++i) {
        io::write_field(dir / "data_sd21" / ("atom_" + std::to_string(i) + ".bin"), p.dataset_atoms[i]);
    }
    cfg.models.push_back(data);

    for (const MixtureSpec* spec : {&p.sd3, &p.flux}) {
        ModelDecl m;
        m.id = spec->id;
        m.type = "mixture";
        for (std::size_t i = 0; i < spec->means.size(); ++i) {
            const std::string rel = spec->id + "/mean_" + std::to_string(i) + ".bin";
            io::write_field(dir / rel, spec->means[i]);
            m.components.push_back({1.0 / static_cast<double>(spec->means.size()), rel, spec->stddev});
        }
        cfg.models.push_back(m);
    }
    cfg.guidance_model = "mix_flux";
    cfg.scorers = {ScorerDecl{"hf_energy", 0.9, {}}, ScorerDecl{"noise_estimate", {}, {}},
                   ScorerDecl{"mixture_loglik", {}, "mix_sd3"}};
    cfg.guidance.g = kTestbedGUnits * g_unit(size * size, cfg.guidance.steps);

    const fs::path path = dir / "config.json";
    io::write_text(path, cfg.to_json().dump(2) + "\n");
    return path;
}

}  // namespace ttpo
