// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "ttpo/error.hpp"
#include "ttpo/field_io.hpp"
#include "ttpo/pipeline.hpp"
#include "ttpo/testbed.hpp"

using namespace ttpo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Io;
}

json read_json(const fs::path& p) { return json::parse(io::read_text(p)); }

// A 16x16 testbed keeps the stage tests quick.
struct Bench {
    test::TempDir dir{"pipeline"};
    fs::path config_path = write_testbed(dir.path() / "testbed", 16);
    RunConfig cfg = RunConfig::load(config_path);
    fs::path run = dir.path() / "run";
};

std::vector<std::string> manifest_checksums(const fs::path& run) {
    std::vector<std::string> out;
    for (const auto& e : read_json(run / "candidates" / "manifest.json")) out.push_back(e.at("checksum"));
    return out;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config round trip and validation") {
    Bench b;
    CHECK(b.cfg.models.size() == 3);
    CHECK(b.cfg.scorers.size() == 3);
    CHECK(fs::path(b.cfg.input).is_absolute());
    const RunConfig again = RunConfig::from_json(b.cfg.to_json(), b.dir.path());
    CHECK(again.to_json() == b.cfg.to_json());

    RunConfig bad = b.cfg;
    bad.scales = {0.2, 0.4};
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::NoiseScaleOutOfBounds);
    bad = b.cfg;
    bad.input = (b.dir.path() / "missing.bin").string();
    CHECK(code_of([&] { bad.validate(); }) != ErrorCode::NoiseScaleOutOfBounds);
    CHECK(code_of([&] { RunConfig::from_json(json{{"name", "x"}}, b.dir.path()); }) == ErrorCode::InvalidConfig);
    CHECK(selection_mode_from_string("human") == SelectionMode::Human);
    CHECK(code_of([] { selection_mode_from_string("crowd"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("run directory resolution") {
    RunConfig cfg;
    cfg.name = "alpha";
    CHECK(resolve_run_dir(cfg, fs::path("/tmp/x")) == fs::path("/tmp/x"));
    ::unsetenv("TTPO_RUN_ROOT");
    CHECK(resolve_run_dir(cfg, std::nullopt) == fs::absolute(fs::path("runs") / "alpha"));
    ::setenv("TTPO_RUN_ROOT", "/tmp/ttpo_root", 1);
    CHECK(resolve_run_dir(cfg, std::nullopt) == fs::path("/tmp/ttpo_root/alpha"));
    cfg.output_dir = "/tmp/explicit";
    CHECK(resolve_run_dir(cfg, std::nullopt) == fs::path("/tmp/explicit"));
    ::unsetenv("TTPO_RUN_ROOT");
}

TEST_CASE("generate writes 16 candidates and is idempotent") {
    Bench b;
    CHECK_FALSE(cmd_generate(b.cfg, b.run).skipped);
    const json manifest = read_json(b.run / "candidates" / "manifest.json");
    REQUIRE(manifest.size() == 16);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        CHECK(manifest[i].at("id") == static_cast<int>(i));
        CHECK(fs::exists(b.run / "candidates" / manifest[i].at("file").get<std::string>()));
    }
    CHECK(manifest[0].at("source") == "original");
    CHECK(manifest[0].at("noise_scale").is_null());
    CHECK(fs::exists(b.run / "config.json"));
    const auto sums = manifest_checksums(b.run);

    CHECK(cmd_generate(b.cfg, b.run).skipped);
    CHECK(cmd_generate(b.cfg, b.run, {true, false}).skipped == false);
    CHECK(manifest_checksums(b.run) == sums);

    RunConfig other = b.cfg;
    other.seed = 5;
    CHECK(code_of([&] { cmd_generate(other, b.run); }) == ErrorCode::RunDirConflict);
    CHECK(manifest_checksums(b.run) == sums);
    CHECK_FALSE(cmd_generate(other, b.run, {true, true}).skipped);
    CHECK(manifest_checksums(b.run) != sums);

    const CandidateSet set = load_candidates(b.run);
    CHECK(set.size() == 16);
    CHECK(set.candidates[0].field == set.restored);
}

TEST_CASE("generate rejects an out-of-bounds scale") {
    Bench b;
    b.cfg.scales = {0.1, 0.4};
    CHECK(code_of([&] { cmd_generate(b.cfg, b.run); }) == ErrorCode::NoiseScaleOutOfBounds);
    CHECK_FALSE(fs::exists(b.run / "candidates" / "manifest.json"));
}

TEST_CASE("corrupted candidate is detected") {
    Bench b;
    cmd_generate(b.cfg, b.run);
    Field f = io::read_field(b.run / "candidates" / "0003.bin");
    f[0] += 1.0;
    io::write_field(b.run / "candidates" / "0003.bin", f);
    CHECK(code_of([&] { load_candidates(b.run); }) == ErrorCode::Io);
}

TEST_CASE("metric selection matches enumeration over scores.json") {
    Bench b;
    cmd_generate(b.cfg, b.run);
    CHECK_FALSE(cmd_select(b.run).skipped);
    CHECK(cmd_select(b.run).skipped);

    const json scores = read_json(b.run / "scores.json");
    const auto rewards = scores.at("rewards").get<std::vector<double>>();
    const auto normalized = scores.at("normalized").get<std::vector<std::vector<double>>>();
    REQUIRE(rewards.size() == 16);
    REQUIRE(normalized.size() == 3);
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        CHECK(rewards[i] == doctest::Approx((normalized[0][i] + normalized[1][i] + normalized[2][i]) / 3.0));
    }
    std::size_t best = 0, worst = 0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        for (std::size_t j = 0; j < rewards.size(); ++j) {
            if (rewards[j] > rewards[best]) best = j;
            if (rewards[j] < rewards[worst]) worst = j;
        }
    }
    const PreferencePair pair = load_pair(b.run);
    CHECK(pair.win_id == static_cast<int>(best));
    CHECK(pair.lose_id == static_cast<int>(worst));
    CHECK(pair.provenance == Provenance::HybridMetric);
    CHECK(*pair.win_reward >= *pair.lose_reward);
    CHECK(read_json(b.run / "pair.json").at("provenance") == "hybrid-metric");
}

TEST_CASE("human selection needs a completed session") {
    Bench b;
    cmd_generate(b.cfg, b.run);
    CHECK(code_of([&] { cmd_select(b.run, SelectionMode::Human); }) == ErrorCode::SelectionPending);

    std::vector<int> ids(16);
    std::iota(ids.begin(), ids.end(), 0);
    PairwiseSession s(ids);
    s.record(0, 1);
    io::write_text(session_path(b.run), session_to_json(s).dump());
    CHECK(code_of([&] { cmd_select(b.run, SelectionMode::Human); }) == ErrorCode::SelectionPending);
    CHECK_FALSE(fs::exists(b.run / "pair.json"));

    // Lower id preferred everywhere else, so 1 takes 15 wins, 0 takes 14, 15 none.
    for (std::size_t i = 1; i < s.total(); ++i) s.record(i, s.pairs()[i].first);
    io::write_text(session_path(b.run), session_to_json(s).dump());
    cmd_select(b.run, SelectionMode::Human);
    const PreferencePair pair = load_pair(b.run);
    CHECK(pair.provenance == Provenance::Human);
    CHECK(pair.win_id == 1);
    CHECK(pair.lose_id == 15);
    CHECK(session_from_json(session_to_json(s)).choices() == s.choices());
}

TEST_CASE("optimize writes outputs and curves") {
    Bench b;
    cmd_generate(b.cfg, b.run);
    CHECK(code_of([&] { cmd_optimize(b.run); }) == ErrorCode::SelectionPending);
    cmd_select(b.run);
    CHECK_FALSE(cmd_optimize(b.run).skipped);
    CHECK(cmd_optimize(b.run).skipped);
    const std::string curves = io::read_text(b.run / "curves.csv");
    CHECK(line_count(curves) == b.cfg.guidance.steps + 1);
    CHECK(io::read_text(b.run / "output.pgm").rfind("P2\n16 16\n255\n", 0) == 0);
    CHECK(io::read_field(b.run / "output.bin").all_finite());
    CHECK(fs::exists(b.run / "optimize.json"));
    CHECK(fs::exists(b.run / "log.txt"));
}

TEST_CASE("g = 0 output equals plain sampling") {
    Bench b;
    b.cfg.guidance.g = 0.0;
    cmd_run(b.cfg, b.run);
    const RunInputs in = load_inputs(b.cfg);
    const Field plain = unguided_sample(16, 16, *in.guidance_model, b.cfg.guidance);
    CHECK(io::checksum(io::read_field(b.run / "output.bin")) == io::checksum(plain));
}

TEST_CASE("changing the pair reruns optimize; a new config needs force") {
    Bench b;
    cmd_run(b.cfg, b.run);
    const Field first = io::read_field(b.run / "output.bin");
    PreferencePair swapped = load_pair(b.run);
    std::swap(swapped.win_id, swapped.lose_id);
    write_pair(b.run, swapped);
    CHECK(code_of([&] { cmd_optimize(b.run); }) == ErrorCode::RunDirConflict);
    CHECK_FALSE(cmd_optimize(b.run, {true, true}).skipped);
    CHECK(io::read_field(b.run / "output.bin") != first);
}

TEST_CASE("divergence keeps partial curves") {
    Bench b;
    b.cfg.guidance.g = 1e305;
    cmd_generate(b.cfg, b.run);
    cmd_select(b.run);
    CHECK(code_of([&] { cmd_optimize(b.run); }) == ErrorCode::GuidanceDiverged);
    REQUIRE(fs::exists(b.run / "curves.csv"));
    CHECK(line_count(io::read_text(b.run / "curves.csv")) < b.cfg.guidance.steps + 1);
    CHECK_FALSE(fs::exists(b.run / "output.bin"));
}

TEST_CASE("gsweep writes one sub-run per grid value and a summary") {
    Bench b;
    const GSweepResult r = cmd_gsweep(b.cfg, b.run);
    REQUIRE(r.rows.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const fs::path sub = b.run / ("g_" + std::to_string(i));
        CHECK(fs::exists(sub / "output.bin"));
        CHECK(r.rows[i].g == doctest::Approx(kDefaultGGrid[i] * g_unit(256, b.cfg.guidance.steps)));
        CHECK(r.rows[i].reward.has_value());
        CHECK(*r.rows[i].reward <= *r.rows[r.best].reward);
        CHECK(load_run_config(sub).guidance.g == r.rows[i].g);
    }
    const std::string csv = io::read_text(b.run / "gsweep.csv");
    CHECK(csv.rfind("g_units,g,reward\n", 0) == 0);
    CHECK(line_count(csv) == 6);
}

TEST_CASE("match experiment fixture") {
    test::TempDir dir("match");
    json scorers = json::array();
    for (int k = 0; k < 6; ++k) scorers.push_back({{"name", "m" + std::to_string(k)}, {"higher_is_better", k != 5}});
    json groups = json::array();
    for (int g = 0; g < 7; ++g) {
        json rows = json::array();
        for (int k = 0; k < 6; ++k) {
            std::vector<double> row;
            for (int i = 0; i < 4; ++i) row.push_back(std::sin(1.0 + g * 7 + k * 3 + i * 1.3) * (k == 5 ? -1 : 1));
            rows.push_back(row);
        }
        groups.push_back({{"scores", rows}, {"win", g % 4}, {"lose", (g + 2) % 4}});
    }
    const fs::path fixture = dir.path() / "fixture.json";
    io::write_text(fixture, json{{"scorers", scorers}, {"groups", groups}}.dump());
    const MatchReport r = cmd_match_experiment(fixture);
    CHECK(r.triple_count == 20);
    CHECK(r.denominator == 70);
    for (std::size_t m : r.matches) CHECK(m <= 70);

    groups[0].erase("win");
    io::write_text(fixture, json{{"scorers", scorers}, {"groups", groups}}.dump());
    CHECK(code_of([&] { cmd_match_experiment(fixture); }) == ErrorCode::InvalidInput);
    io::write_text(fixture, "{\"scorers\": 3}");
    CHECK(code_of([&] { cmd_match_experiment(fixture); }) == ErrorCode::InvalidInput);
}
