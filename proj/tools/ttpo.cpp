// SPDX-License-Identifier: Apache-2.0
//
// ttpo command-line driver.
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttpo/error.hpp"
#include "ttpo/field_io.hpp"
#include "ttpo/pipeline.hpp"
#include "ttpo/server.hpp"
#include "ttpo/testbed.hpp"

namespace fs = std::filesystem;

namespace {

ttpo::SelectionServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int fail(std::string_view code, const std::string& message) {
    std::cerr << nlohmann::json{{"code", code}, {"message", message}}.dump() << std::endl;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test-time preference optimization for restored fields"};
    app.require_subcommand(1);

    std::string config_path;
    std::string run_dir_arg;
    std::string mode_arg;
    std::string fixture;
    int port = 8080;
    bool force = false;
    bool quick = false;
    bool serial = false;
    std::optional<std::uint64_t> seed;
    std::vector<double> grid = ttpo::kDefaultGGrid;
    std::size_t size = 32;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "run configuration JSON");
        if (needs_config) c->required();
        sub->add_option("--run-dir", run_dir_arg, "run directory (default: config output_dir, $TTPO_RUN_ROOT/<name>, runs/<name>)");
        sub->add_flag("--force", force, "redo stages whose inputs changed");
        sub->add_option("--seed", seed, "master seed override");
        sub->add_flag("--serial", serial, "disable parallel candidate generation");
    };

    auto* generate = app.add_subcommand("generate", "build the candidate set");
    add_common(generate, true);
    auto* select = app.add_subcommand("select", "choose the win/lose pair");
    add_common(select, false);
    select->add_option("--mode", mode_arg, "metric | human")->check(CLI::IsMember({"metric", "human"}));
    auto* optimize = app.add_subcommand("optimize", "run guided denoising");
    add_common(optimize, false);
    auto* run = app.add_subcommand("run", "generate, select and optimize");
    add_common(run, true);
    run->add_option("--mode", mode_arg, "metric | human")->check(CLI::IsMember({"metric", "human"}));
    auto* gsweep = app.add_subcommand("gsweep", "sweep the correction scale g");
    add_common(gsweep, true);
    gsweep->add_option("--grid", grid, "g values in units of elements/steps");
    auto* match = app.add_subcommand("match-experiment", "scorer-combination agreement with labels");
    match->add_option("fixture", fixture, "fixture JSON")->required();
    auto* serve = app.add_subcommand("serve", "HTTP service for human selection");
    add_common(serve, false);
    serve->add_option("--port", port, "listen port");
    serve->add_flag("--quick", quick, "allow a direct best/worst pick instead of all pairs");
    auto* testbed = app.add_subcommand("testbed", "write the bundled synthetic testbed");
    testbed->add_option("dir", run_dir_arg, "output directory")->required();
    testbed->add_option("--size", size, "field size");
    testbed->add_option("--seed", seed, "testbed seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("invalid-config", e.what());
    }

    try {
        const ttpo::StageOptions opt{force, !serial};
        auto load_config = [&] {
            ttpo::RunConfig cfg = ttpo::RunConfig::load(config_path);
            if (seed) cfg.seed = cfg.guidance.seed = *seed;
            if (!mode_arg.empty()) cfg.selection_mode = ttpo::selection_mode_from_string(mode_arg);
            return cfg;
        };
        auto override_dir = [&]() -> std::optional<fs::path> {
            if (run_dir_arg.empty()) return std::nullopt;
            return fs::path(run_dir_arg);
        };
        // Stages after generate find their config inside the run directory.
        auto existing_dir = [&]() -> fs::path {
            if (!run_dir_arg.empty()) return fs::absolute(run_dir_arg);
            if (!config_path.empty()) return ttpo::resolve_run_dir(load_config(), std::nullopt);
            throw ttpo::Error(ttpo::ErrorCode::InvalidConfig, "pass --run-dir or --config");
        };
        auto report = [](const char* stage, const ttpo::StageOutcome& o, const fs::path& dir) {
            std::cout << stage << (o.skipped ? ": up to date " : ": wrote ") << dir.string() << '\n';
        };

        if (*generate) {
            const auto cfg = load_config();
            const fs::path dir = ttpo::resolve_run_dir(cfg, override_dir());
            report("generate", ttpo::cmd_generate(cfg, dir, opt), dir);
        } else if (*select) {
            const fs::path dir = existing_dir();
            std::optional<ttpo::SelectionMode> mode;
            if (!mode_arg.empty()) mode = ttpo::selection_mode_from_string(mode_arg);
            report("select", ttpo::cmd_select(dir, mode, opt), dir);
            const auto pair = ttpo::load_pair(dir);
            std::cout << "win " << pair.win_id << ", lose " << pair.lose_id << " (" << ttpo::to_string(pair.provenance)
                      << ")\n";
        } else if (*optimize) {
            const fs::path dir = existing_dir();
            report("optimize", ttpo::cmd_optimize(dir, opt), dir);
        } else if (*run) {
            const auto cfg = load_config();
            const fs::path dir = ttpo::resolve_run_dir(cfg, override_dir());
            ttpo::cmd_run(cfg, dir, opt);
            std::cout << "run: wrote " << dir.string() << '\n';
        } else if (*gsweep) {
            const auto cfg = load_config();
            const fs::path dir = ttpo::resolve_run_dir(cfg, override_dir());
            const auto result = ttpo::cmd_gsweep(cfg, dir, grid, opt);
            for (std::size_t i = 0; i < result.rows.size(); ++i) {
                const auto& r = result.rows[i];
                std::cout << "g=" << r.g << " (" << r.g_units << " units): ";
                if (r.reward) {
                    std::cout << "reward " << *r.reward;
                } else {
                    std::cout << "diverged";
                }
                std::cout << (i == result.best ? "  <- best\n" : "\n");
            }
        } else if (*match) {
            std::cout << ttpo::cmd_match_experiment(fixture).to_csv();
        } else if (*serve) {
            const fs::path dir = existing_dir();
            ttpo::SelectionServer server(dir, {quick});
            server.bind("127.0.0.1", port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving " << dir.string() << " on http://127.0.0.1:" << port << std::endl;
            server.listen();
            g_server = nullptr;
        } else if (*testbed) {
            const fs::path cfg = ttpo::write_testbed(run_dir_arg, size, seed.value_or(ttpo::kDefaultSeed));
            std::cout << "testbed: wrote " << cfg.string() << '\n';
        }
    } catch (const ttpo::Error& e) {
        return fail(ttpo::to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return fail("io-error", e.what());
    }
    return 0;
}
