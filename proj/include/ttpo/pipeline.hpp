// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration over a run directory:
//
//   config.json           resolved run configuration
//   candidates/NNNN.bin   candidate fields (+ .json sidecars)
//   candidates/manifest.json
//   scores.json           metric selection only
//   session.json          human selection state (written by serve)
//   pair.json
//   curves.csv, output.bin(+.json), output.pgm, optimize.json
//   stages.json           per-stage input fingerprints
//   log.txt
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttpo/candidates.hpp"
#include "ttpo/guidance.hpp"
#include "ttpo/selection.hpp"
#include "ttpo/velocity.hpp"

namespace ttpo {

struct ComponentDecl {
    double weight = 1.0;
    std::string mean;  // field path
    double stddev = 1.0;
};

struct ModelDecl {
    std::string id;
    std::string type;  // "mixture" | "dataset"
    std::vector<ComponentDecl> components;
    std::string dir;  // dataset: directory of .bin atoms
    double t_min = kDefaultTMin;
};

struct ScorerDecl {
    std::string name;
    std::optional<double> cutoff;  // hf_energy
    std::optional<std::string> prior;  // mixture_loglik: a mixture model id
};

enum class SelectionMode { Metric, Human };
std::string_view to_string(SelectionMode m);
SelectionMode selection_mode_from_string(std::string_view s);

struct RunConfig {
    std::string name = "run";
    std::string input;
    std::vector<ModelDecl> models;
    std::vector<double> scales{0.1, 0.15, 0.2, 0.25, 0.3};
    std::size_t generation_steps = 50;
    std::vector<ScorerDecl> scorers;
    std::string guidance_model;  // defaults to the last declared model
    GuidanceConfig guidance;
    SelectionMode selection_mode = SelectionMode::Metric;
    std::uint64_t seed = kDefaultSeed;
    std::string output_dir;

    nlohmann::json to_json() const;
    /// Relative paths are resolved against `base_dir`. Throws InvalidConfig.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    /// Checks referenced paths, scale bounds, ids, and the guidance block.
    void validate() const;
};

/// Models, scorers and the restored field materialized from a RunConfig.
struct RunInputs {
    Field restored;
    std::vector<std::shared_ptr<const VelocityField>> models;
    std::shared_ptr<const VelocityField> guidance_model;
    ScorerList scorers;

    std::vector<const VelocityField*> model_ptrs() const;
};
RunInputs load_inputs(const RunConfig& cfg);

/// --run-dir, else the config's output_dir, else $TTPO_RUN_ROOT/<name>, else runs/<name>.
std::filesystem::path resolve_run_dir(const RunConfig& cfg, const std::optional<std::filesystem::path>& override);

struct StageOptions {
    bool force = false;
    bool parallel = true;
};

struct StageOutcome {
    bool skipped = false;  // identical inputs already completed
};

StageOutcome cmd_generate(const RunConfig& cfg, const std::filesystem::path& run_dir, const StageOptions& opt = {});
/// The config stored in a run directory by cmd_generate.
RunConfig load_run_config(const std::filesystem::path& run_dir);
CandidateSet load_candidates(const std::filesystem::path& run_dir);

StageOutcome cmd_select(const std::filesystem::path& run_dir, std::optional<SelectionMode> mode = std::nullopt,
                        const StageOptions& opt = {});
PreferencePair load_pair(const std::filesystem::path& run_dir);
void write_pair(const std::filesystem::path& run_dir, const PreferencePair& pair);

StageOutcome cmd_optimize(const std::filesystem::path& run_dir, const StageOptions& opt = {});
void cmd_run(const RunConfig& cfg, const std::filesystem::path& run_dir, const StageOptions& opt = {});

/// Terminal reward of a field against the candidate pool's scorer statistics.
double terminal_reward(const RunInputs& inputs, const CandidateSet& set, const Field& f);

struct GSweepRow {
    double g_units = 0.0;
    double g = 0.0;
    std::optional<double> reward;  // absent when the run diverged
};
struct GSweepResult {
    std::vector<GSweepRow> rows;
    std::size_t best = 0;
};
inline const std::vector<double> kDefaultGGrid{0.1, 0.3, 1.0, 3.0, 10.0};
/// Generates and selects once, then optimizes once per grid value (in units
/// of g_unit) in sub-run directories g_<i>/. Writes gsweep.csv.
GSweepResult cmd_gsweep(const RunConfig& cfg, const std::filesystem::path& run_dir,
                        const std::vector<double>& grid = kDefaultGGrid, const StageOptions& opt = {});

/// Fixture: {"scorers": [{"name", "higher_is_better"}], "groups": [{"scores": [[..]], "win", "lose"}]}
/// with one raw row per scorer and candidate ids 0..n-1.
MatchReport cmd_match_experiment(const std::filesystem::path& fixture);

// Session persistence shared with the HTTP service.
nlohmann::json session_to_json(const PairwiseSession& s);
PairwiseSession session_from_json(const nlohmann::json& j);
std::filesystem::path session_path(const std::filesystem::path& run_dir);

}  // namespace ttpo
