// SPDX-License-Identifier: Apache-2.0
#include "ttpo/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

#include "ttpo/error.hpp"
#include "ttpo/field_io.hpp"

namespace ttpo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(SelectionMode m) { return m == SelectionMode::Human ? "human" : "metric"; }

SelectionMode selection_mode_from_string(std::string_view s) {
    if (s == "metric") return SelectionMode::Metric;
    if (s == "human") return SelectionMode::Human;
    throw Error(ErrorCode::InvalidConfig, "unknown selection mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return p;
    const fs::path path(p);
    if (path.is_absolute()) return path.lexically_normal().string();
    return fs::absolute(base / path).lexically_normal().string();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

json RunConfig::to_json() const {
    json models_j = json::array();
    for (const auto& m : models) {
        json mj = {{"id", m.id}, {"type", m.type}, {"t_min", m.t_min}};
        if (m.type == "mixture") {
            json comps = json::array();
            for (const auto& c : m.components) {
                comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"std", c.stddev}});
            }
            mj["components"] = comps;
        } else {
            mj["dir"] = m.dir;
        }
        models_j.push_back(mj);
    }
    json scorers_j = json::array();
    for (const auto& s : scorers) {
        json sj = {{"name", s.name}};
        if (s.cutoff) sj["D0"] = *s.cutoff;
        if (s.prior) sj["prior"] = *s.prior;
        scorers_j.push_back(sj);
    }
    const GuidanceConfig& g = guidance;
    json guidance_j = {{"alpha", g.alpha},
                       {"beta", g.beta},
                       {"g", g.g},
                       {"D0", g.cutoff},
                       {"T1", g.t1},
                       {"T2", g.t2},
                       {"steps", g.steps},
                       {"t_min", g.t_min},
                       {"distance", std::string(ttpo::to_string(g.distance))},
                       {"preference", g.preference},
                       {"frequency_split", g.frequency_split},
                       {"stage_gating", g.stage_gating}};
    if (!guidance_model.empty()) guidance_j["model"] = guidance_model;
    json j = {{"name", name},
              {"input", input},
              {"models", models_j},
              {"scales", scales},
              {"generation_steps", generation_steps},
              {"scorers", scorers_j},
              {"guidance", guidance_j},
              {"selection_mode", std::string(ttpo::to_string(selection_mode))},
              {"seed", seed}};
    if (!output_dir.empty()) j["output_dir"] = output_dir;
    return j;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
    RunConfig c;
    try {
        c.name = get_or<std::string>(j, "name", c.name);
        c.input = resolve(base_dir, j.at("input").get<std::string>());
        for (const auto& mj : j.at("models")) {
            ModelDecl m;
            m.id = mj.at("id").get<std::string>();
            m.type = mj.at("type").get<std::string>();
            m.t_min = get_or<double>(mj, "t_min", kDefaultTMin);
            if (m.type == "mixture") {
                for (const auto& cj : mj.at("components")) {
                    m.components.push_back({cj.at("weight").get<double>(),
                                            resolve(base_dir, cj.at("mean").get<std::string>()),
                                            cj.at("std").get<double>()});
                }
            } else if (m.type == "dataset") {
                m.dir = resolve(base_dir, mj.at("dir").get<std::string>());
            } else {
                throw Error(ErrorCode::InvalidConfig, "unknown model type '" + m.type + "'");
            }
            c.models.push_back(std::move(m));
        }
        c.scales = get_or<std::vector<double>>(j, "scales", c.scales);
        c.generation_steps = get_or<std::size_t>(j, "generation_steps", c.generation_steps);
        if (j.contains("scorers")) {
            for (const auto& sj : j.at("scorers")) {
                ScorerDecl s;
                s.name = sj.at("name").get<std::string>();
                if (sj.contains("D0")) s.cutoff = sj.at("D0").get<double>();
                if (sj.contains("prior")) s.prior = sj.at("prior").get<std::string>();
                c.scorers.push_back(std::move(s));
            }
        }
        c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
        if (j.contains("guidance")) {
            const json& gj = j.at("guidance");
            GuidanceConfig& g = c.guidance;
            c.guidance_model = get_or<std::string>(gj, "model", "");
            g.alpha = get_or<double>(gj, "alpha", g.alpha);
            g.beta = get_or<double>(gj, "beta", g.beta);
            g.g = get_or<double>(gj, "g", g.g);
            g.cutoff = get_or<double>(gj, "D0", g.cutoff);
            g.t1 = get_or<double>(gj, "T1", g.t1);
            g.t2 = get_or<double>(gj, "T2", g.t2);
            g.steps = get_or<std::size_t>(gj, "steps", g.steps);
            g.t_min = get_or<double>(gj, "t_min", g.t_min);
            g.distance = distance_from_string(get_or<std::string>(gj, "distance", "l1"));
            g.preference = get_or<bool>(gj, "preference", g.preference);
            g.frequency_split = get_or<bool>(gj, "frequency_split", g.frequency_split);
            g.stage_gating = get_or<bool>(gj, "stage_gating", g.stage_gating);
        }
        c.guidance.seed = c.seed;
        c.selection_mode = selection_mode_from_string(get_or<std::string>(j, "selection_mode", "metric"));
        const std::string out = get_or<std::string>(j, "output_dir", "");
        c.output_dir = resolve(base_dir, out);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("malformed config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(j, fs::absolute(path).parent_path());
}

void RunConfig::validate() const {
    auto fail = [](ErrorCode code, const std::string& what) { throw Error(code, what); };
    if (name.empty()) fail(ErrorCode::InvalidConfig, "run name is empty");
    if (!fs::exists(input)) fail(ErrorCode::InvalidConfig, "input field not found: " + input);
    if (models.empty()) fail(ErrorCode::InvalidConfig, "no velocity models declared");
    if (scales.empty()) fail(ErrorCode::InvalidConfig, "no noise scales declared");
    for (double s : scales) check_noise_scale(s);
    if (generation_steps == 0) fail(ErrorCode::InvalidConfig, "generation_steps must be >= 1");
    std::vector<std::string> ids;
    for (const auto& m : models) {
        if (m.id.empty()) fail(ErrorCode::InvalidConfig, "model without id");
        if (std::find(ids.begin(), ids.end(), m.id) != ids.end()) fail(ErrorCode::InvalidConfig, "duplicate model id " + m.id);
        ids.push_back(m.id);
        if (m.type == "mixture") {
            if (m.components.empty()) fail(ErrorCode::InvalidConfig, "mixture " + m.id + " has no components");
            for (const auto& c : m.components) {
                if (!fs::exists(c.mean)) fail(ErrorCode::InvalidConfig, "mixture mean not found: " + c.mean);
            }
        } else if (!fs::is_directory(m.dir)) {
            fail(ErrorCode::InvalidConfig, "dataset directory not found: " + m.dir);
        }
    }
    auto find_model = [&](const std::string& id) {
        return std::find_if(models.begin(), models.end(), [&](const ModelDecl& m) { return m.id == id; });
    };
    if (!guidance_model.empty() && find_model(guidance_model) == models.end()) {
        fail(ErrorCode::InvalidConfig, "guidance model '" + guidance_model + "' is not declared");
    }
    for (const auto& s : scorers) {
        if (s.name == "mixture_loglik") {
            if (!s.prior) fail(ErrorCode::InvalidConfig, "mixture_loglik needs a prior");
            const auto it = find_model(*s.prior);
            if (it == models.end() || it->type != "mixture") {
                fail(ErrorCode::InvalidConfig, "prior '" + *s.prior + "' is not a declared mixture");
            }
        }
    }
    guidance.validate();
}

// ---------------------------------------------------------------------------
// Materialization

std::vector<const VelocityField*> RunInputs::model_ptrs() const {
    std::vector<const VelocityField*> out;
    for (const auto& m : models) out.push_back(m.get());
    return out;
}

namespace {

std::shared_ptr<const VelocityField> load_model(const ModelDecl& m) {
    if (m.type == "mixture") {
        std::vector<MixtureComponent> comps;
        for (const auto& c : m.components) comps.push_back({c.weight, io::read_field(c.mean), c.stddev});
        return std::make_shared<GaussianMixtureField>(m.id, std::move(comps), m.t_min);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(m.dir)) {
        if (entry.path().extension() == ".bin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::InvalidConfig, "dataset " + m.id + " has no .bin atoms");
    std::vector<Field> atoms;
    for (const auto& f : files) atoms.push_back(io::read_field(f));
    return std::make_shared<EmpiricalDatasetField>(m.id, std::move(atoms), m.t_min);
}

}  // namespace

RunInputs load_inputs(const RunConfig& cfg) {
    RunInputs in;
    in.restored = io::read_field(cfg.input);
    for (const auto& m : cfg.models) in.models.push_back(load_model(m));

    const std::string gid = cfg.guidance_model.empty() ? cfg.models.back().id : cfg.guidance_model;
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
        if (cfg.models[i].id == gid) in.guidance_model = in.models[i];
    }
    if (!in.guidance_model) throw Error(ErrorCode::InvalidConfig, "guidance model '" + gid + "' is not declared");

    for (const auto& s : cfg.scorers) {
        if (s.name == "hf_energy") {
            in.scorers.push_back(std::make_shared<HfEnergyScorer>(s.cutoff.value_or(cfg.guidance.cutoff)));
        } else if (s.name == "neg_total_variation") {
            in.scorers.push_back(std::make_shared<NegTotalVariationScorer>());
        } else if (s.name == "mixture_loglik") {
            std::shared_ptr<const GaussianMixtureField> prior;
            for (std::size_t i = 0; i < cfg.models.size(); ++i) {
                if (s.prior && cfg.models[i].id == *s.prior) {
                    prior = std::dynamic_pointer_cast<const GaussianMixtureField>(in.models[i]);
                }
            }
            if (!prior) throw Error(ErrorCode::InvalidConfig, "mixture_loglik prior is not a declared mixture");
            in.scorers.push_back(std::make_shared<MixtureLogLikScorer>(prior));
        } else if (s.name == "contrast") {
            in.scorers.push_back(std::make_shared<ContrastScorer>());
        } else if (s.name == "laplacian_energy") {
            in.scorers.push_back(std::make_shared<LaplacianEnergyScorer>());
        } else if (s.name == "noise_estimate") {
            in.scorers.push_back(std::make_shared<NoiseEstimateScorer>());
        } else {
            throw Error(ErrorCode::InvalidConfig, "unknown scorer '" + s.name + "'");
        }
    }
    for (const auto& m : in.models) {
        if (auto* g = dynamic_cast<const GaussianMixtureField*>(m.get())) {
            if (g->height() != in.restored.height() || g->width() != in.restored.width()) {
                throw Error(ErrorCode::InvalidConfig, "model " + m->descriptor() + " does not match the input shape");
            }
        } else if (auto* d = dynamic_cast<const EmpiricalDatasetField*>(m.get())) {
            if (!d->atoms().front().same_shape(in.restored)) {
                throw Error(ErrorCode::InvalidConfig, "model " + m->descriptor() + " does not match the input shape");
            }
        }
    }
    return in;
}

fs::path resolve_run_dir(const RunConfig& cfg, const std::optional<fs::path>& override) {
    if (override) return fs::absolute(*override);
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* root = std::getenv("TTPO_RUN_ROOT"); root && *root) return fs::absolute(fs::path(root) / cfg.name);
    return fs::absolute(fs::path("runs") / cfg.name);
}

// ---------------------------------------------------------------------------
// Run-directory bookkeeping

namespace {

fs::path stages_path(const fs::path& dir) { return dir / "stages.json"; }

json read_json(const fs::path& p) {
    try {
        return json::parse(io::read_text(p));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, "cannot parse " + p.string() + ": " + e.what());
    }
}

json read_stages(const fs::path& dir) {
    return fs::exists(stages_path(dir)) ? read_json(stages_path(dir)) : json::object();
}

void write_json(const fs::path& p, const json& j) { io::write_text(p, j.dump(2) + "\n"); }

std::string fingerprint(const std::string& text) { return io::hex64(io::checksum_bytes(text)); }

// Returns true when the stage already ran with this fingerprint.
bool stage_done(const fs::path& dir, const std::string& stage, const std::string& fp, bool force,
                const std::vector<fs::path>& artifacts) {
    const json stages = read_stages(dir);
    if (!stages.contains(stage)) return false;
    const bool present = std::all_of(artifacts.begin(), artifacts.end(), [](const fs::path& p) { return fs::exists(p); });
    if (stages.at(stage).get<std::string>() == fp && present && !force) return true;
    if (stages.at(stage).get<std::string>() != fp && !force) {
        throw Error(ErrorCode::RunDirConflict,
                    "stage '" + stage + "' in " + dir.string() + " ran with different inputs; pass --force to redo it");
    }
    return false;
}

void stamp_stage(const fs::path& dir, const std::string& stage, const std::string& fp,
                 const std::vector<std::string>& clear = {}) {
    json stages = read_stages(dir);
    stages[stage] = fp;
    for (const auto& s : clear) stages.erase(s);
    write_json(stages_path(dir), stages);
}

void append_log(const fs::path& dir, const std::string& stage, const std::vector<std::string>& lines) {
    std::ofstream out(dir / "log.txt", std::ios::app);
    out << "[" << stage << "] done\n";
    for (const auto& l : lines) out << "[" << stage << "] warning: " << l << '\n';
}

std::string candidate_file(int id) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << id << ".bin";
    return os.str();
}

}  // namespace

RunConfig load_run_config(const fs::path& run_dir) {
    const fs::path p = run_dir / "config.json";
    if (!fs::exists(p)) throw Error(ErrorCode::InvalidInput, "no config.json in " + run_dir.string() + "; run generate first");
    return RunConfig::load(p);
}

// ---------------------------------------------------------------------------
// Stage 1

StageOutcome cmd_generate(const RunConfig& cfg, const fs::path& run_dir, const StageOptions& opt) {
    cfg.validate();
    const json cfg_j = cfg.to_json();
    const std::string fp = fingerprint(cfg_j.dump());
    const fs::path manifest_path = run_dir / "candidates" / "manifest.json";
    if (stage_done(run_dir, "generate", fp, opt.force, {manifest_path})) return {true};

    const RunInputs in = load_inputs(cfg);
    RunLog log;
    const CandidateSet set = build_candidate_set(in.restored, in.model_ptrs(), cfg.scales, cfg.generation_steps,
                                                 cfg.seed, opt.parallel, &log);

    fs::create_directories(run_dir / "candidates");
    write_json(run_dir / "config.json", cfg_j);
    json manifest = json::array();
    for (const auto& c : set.candidates) {
        const std::string file = candidate_file(c.id);
        io::write_field(run_dir / "candidates" / file, c.field);
        json e = {{"id", c.id}, {"source", c.source}, {"file", file}, {"checksum", io::hex64(io::checksum(c.field))}};
        e["noise_scale"] = c.noise_scale ? json(*c.noise_scale) : json(nullptr);
        e["seed"] = c.seed ? json(*c.seed) : json(nullptr);
        manifest.push_back(e);
    }
    write_json(manifest_path, manifest);
    stamp_stage(run_dir, "generate", fp, {"select", "optimize"});
    append_log(run_dir, "generate", log.entries());
    return {};
}

CandidateSet load_candidates(const fs::path& run_dir) {
    const fs::path manifest_path = run_dir / "candidates" / "manifest.json";
    if (!fs::exists(manifest_path)) throw Error(ErrorCode::InvalidInput, "no candidates in " + run_dir.string());
    const json manifest = read_json(manifest_path);
    CandidateSet set;
    for (const auto& e : manifest) {
        Candidate c;
        c.id = e.at("id").get<int>();
        c.source = e.at("source").get<std::string>();
        if (!e.at("noise_scale").is_null()) c.noise_scale = e.at("noise_scale").get<double>();
        if (!e.at("seed").is_null()) c.seed = e.at("seed").get<std::uint64_t>();
        c.field = io::read_field(run_dir / "candidates" / e.at("file").get<std::string>());
        if (io::hex64(io::checksum(c.field)) != e.at("checksum").get<std::string>()) {
            throw Error(ErrorCode::Io, "checksum mismatch for candidate " + std::to_string(c.id));
        }
        set.candidates.push_back(std::move(c));
    }
    if (set.candidates.empty()) throw Error(ErrorCode::TooFewCandidates, "candidate manifest is empty");
    set.restored = set.candidates.front().field;
    return set;
}

// ---------------------------------------------------------------------------
// Stage 2

fs::path session_path(const fs::path& run_dir) { return run_dir / "session.json"; }

json session_to_json(const PairwiseSession& s) {
    json choices = json::array();
    for (const auto& c : s.choices()) choices.push_back(c ? json(*c) : json(nullptr));
    return {{"ids", s.ids()}, {"choices", choices}};
}

PairwiseSession session_from_json(const json& j) {
    PairwiseSession s(j.at("ids").get<std::vector<int>>());
    const json& choices = j.at("choices");
    if (choices.size() != s.total()) throw Error(ErrorCode::InvalidInput, "session choice count does not match its pairs");
    for (std::size_t i = 0; i < choices.size(); ++i) {
        if (!choices[i].is_null()) s.record(i, choices[i].get<int>());
    }
    return s;
}

namespace {

json pair_to_json(const PreferencePair& p) {
    json j = {{"win", p.win_id}, {"lose", p.lose_id}, {"provenance", std::string(to_string(p.provenance))}};
    if (p.win_reward) j["win_reward"] = *p.win_reward;
    if (p.lose_reward) j["lose_reward"] = *p.lose_reward;
    if (p.degenerate) j["degenerate"] = true;
    return j;
}

}  // namespace

void write_pair(const fs::path& run_dir, const PreferencePair& pair) { write_json(run_dir / "pair.json", pair_to_json(pair)); }

PreferencePair load_pair(const fs::path& run_dir) {
    const fs::path p = run_dir / "pair.json";
    if (!fs::exists(p)) throw Error(ErrorCode::SelectionPending, "no pair.json in " + run_dir.string() + "; run select first");
    const json j = read_json(p);
    PreferencePair pair;
    pair.win_id = j.at("win").get<int>();
    pair.lose_id = j.at("lose").get<int>();
    pair.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    if (j.contains("win_reward")) pair.win_reward = j.at("win_reward").get<double>();
    if (j.contains("lose_reward")) pair.lose_reward = j.at("lose_reward").get<double>();
    pair.degenerate = j.value("degenerate", false);
    return pair;
}

StageOutcome cmd_select(const fs::path& run_dir, std::optional<SelectionMode> mode, const StageOptions& opt) {
    const RunConfig cfg = load_run_config(run_dir);
    const SelectionMode m = mode.value_or(cfg.selection_mode);
    const std::string manifest = io::read_text(run_dir / "candidates" / "manifest.json");

    if (m == SelectionMode::Human) {
        if (!fs::exists(session_path(run_dir))) {
            throw Error(ErrorCode::SelectionPending, "no human selection session in " + run_dir.string());
        }
        const std::string session_text = io::read_text(session_path(run_dir));
        const PairwiseSession session = session_from_json(read_json(session_path(run_dir)));
        const auto result = session.result();
        if (!result) {
            throw Error(ErrorCode::SelectionPending, "selection session has " + std::to_string(session.answered()) +
                                                         " of " + std::to_string(session.total()) + " pairs answered");
        }
        const std::string fp = fingerprint("human\n" + manifest + session_text);
        if (stage_done(run_dir, "select", fp, opt.force, {run_dir / "pair.json"})) return {true};
        write_pair(run_dir, *result);
        stamp_stage(run_dir, "select", fp, {"optimize"});
        append_log(run_dir, "select", {});
        return {};
    }

    if (cfg.scorers.empty()) throw Error(ErrorCode::InvalidConfig, "metric selection needs scorers in the config");
    const std::string fp = fingerprint("metric\n" + manifest + cfg.to_json().at("scorers").dump());
    if (stage_done(run_dir, "select", fp, opt.force, {run_dir / "pair.json", run_dir / "scores.json"})) return {true};

    const CandidateSet set = load_candidates(run_dir);
    if (set.size() < 2) throw Error(ErrorCode::TooFewCandidates, "selection needs at least two candidates");
    const RunInputs in = load_inputs(cfg);
    const ScoreMatrix matrix = build_score_matrix(in.scorers, set);
    const std::vector<double> rewards = hybrid_reward(matrix);
    RunLog log;
    const PreferencePair pair = select_pair(rewards, matrix.candidate_ids, &log);

    json scores = {{"candidates", matrix.candidate_ids},
                   {"scorers", matrix.scorer_names},
                   {"raw", matrix.raw},
                   {"normalized", matrix.normalized},
                   {"rewards", rewards},
                   {"pair", pair_to_json(pair)}};
    write_json(run_dir / "scores.json", scores);
    write_pair(run_dir, pair);
    stamp_stage(run_dir, "select", fp, {"optimize"});
    append_log(run_dir, "select", log.entries());
    return {};
}

// ---------------------------------------------------------------------------
// Stage 3

namespace {

json guidance_to_json(const GuidanceConfig& g) {
    return {{"alpha", g.alpha},     {"beta", g.beta},
            {"g", g.g},             {"D0", g.cutoff},
            {"T1", g.t1},           {"T2", g.t2},
            {"steps", g.steps},     {"t_min", g.t_min},
            {"seed", g.seed},       {"distance", std::string(to_string(g.distance))},
            {"preference", g.preference}, {"frequency_split", g.frequency_split},
            {"stage_gating", g.stage_gating}};
}

}  // namespace

StageOutcome cmd_optimize(const fs::path& run_dir, const StageOptions& opt) {
    const RunConfig cfg = load_run_config(run_dir);
    const std::string pair_text = fs::exists(run_dir / "pair.json") ? io::read_text(run_dir / "pair.json") : "";
    const PreferencePair pair = load_pair(run_dir);
    const std::string manifest = io::read_text(run_dir / "candidates" / "manifest.json");
    const json snapshot = {{"guidance", guidance_to_json(cfg.guidance)},
                           {"model", cfg.guidance_model.empty() ? cfg.models.back().id : cfg.guidance_model},
                           {"pair", read_json(run_dir / "pair.json")}};
    const std::string fp = fingerprint(snapshot.dump() + manifest + pair_text);
    if (stage_done(run_dir, "optimize", fp, opt.force,
                   {run_dir / "output.bin", run_dir / "curves.csv", run_dir / "output.pgm"})) {
        return {true};
    }

    const CandidateSet set = load_candidates(run_dir);
    const RunInputs in = load_inputs(cfg);
    const Field& yw = set.by_id(pair.win_id).field;
    const Field& yl = set.by_id(pair.lose_id).field;
    write_json(run_dir / "optimize.json", snapshot);

    RunLog log;
    try {
        const OptimizeResult r = optimize(set.restored, yw, yl, *in.guidance_model, cfg.guidance, &log);
        io::write_text(run_dir / "curves.csv", r.record.curves_csv());
        io::write_field(run_dir / "output.bin", r.output);
        io::write_pgm(run_dir / "output.pgm", r.output);
    } catch (const GuidanceDiverged& e) {
        io::write_text(run_dir / "curves.csv", e.record().curves_csv());
        auto lines = log.entries();
        lines.push_back(e.what());
        append_log(run_dir, "optimize", lines);
        throw;
    }
    stamp_stage(run_dir, "optimize", fp);
    append_log(run_dir, "optimize", log.entries());
    return {};
}

void cmd_run(const RunConfig& cfg, const fs::path& run_dir, const StageOptions& opt) {
    cmd_generate(cfg, run_dir, opt);
    cmd_select(run_dir, cfg.selection_mode, opt);
    cmd_optimize(run_dir, opt);
}

// ---------------------------------------------------------------------------
// Sweeps and experiments

double terminal_reward(const RunInputs& inputs, const CandidateSet& set, const Field& f) {
    std::vector<const Field*> pool;
    for (const auto& c : set.candidates) pool.push_back(&c.field);
    return PoolReward(inputs.scorers, pool)(f);
}

GSweepResult cmd_gsweep(const RunConfig& cfg, const fs::path& run_dir, const std::vector<double>& grid,
                        const StageOptions& opt) {
    if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "empty g grid");
    cmd_generate(cfg, run_dir, opt);
    cmd_select(run_dir, SelectionMode::Metric, opt);
    const RunConfig stored = load_run_config(run_dir);
    const CandidateSet set = load_candidates(run_dir);
    const RunInputs in = load_inputs(stored);
    const double unit = g_unit(set.restored.size(), stored.guidance.steps);

    auto run_one = [&](std::size_t i) -> GSweepRow {
        GSweepRow row{grid[i], grid[i] * unit, std::nullopt};
        const fs::path sub = run_dir / ("g_" + std::to_string(i));
        fs::create_directories(sub);
        fs::copy(run_dir / "candidates", sub / "candidates",
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
        fs::copy_file(run_dir / "pair.json", sub / "pair.json", fs::copy_options::overwrite_existing);
        RunConfig sub_cfg = stored;
        sub_cfg.guidance.g = row.g;
        write_json(sub / "config.json", sub_cfg.to_json());
        try {
            cmd_optimize(sub, {true, opt.parallel});
            row.reward = terminal_reward(in, set, io::read_field(sub / "output.bin"));
        } catch (const GuidanceDiverged&) {
        }
        return row;
    };

    GSweepResult result;
    if (opt.parallel) {
        std::vector<std::future<GSweepRow>> jobs;
        for (std::size_t i = 0; i < grid.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& j : jobs) result.rows.push_back(j.get());
    } else {
        for (std::size_t i = 0; i < grid.size(); ++i) result.rows.push_back(run_one(i));
    }

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i].reward;
        if (r && (!best || *r > *result.rows[*best].reward)) best = i;
    }
    if (!best) throw Error(ErrorCode::GuidanceDiverged, "every g in the sweep diverged");
    result.best = *best;

    std::ostringstream csv;
    csv << "g_units,g,reward\n" << std::setprecision(17);
    for (const auto& r : result.rows) {
        csv << r.g_units << ',' << r.g << ',';
        if (r.reward) csv << *r.reward;
        csv << '\n';
    }
    io::write_text(run_dir / "gsweep.csv", csv.str());
    return result;
}

MatchReport cmd_match_experiment(const fs::path& fixture) {
    const json j = read_json(fixture);
    try {
        std::vector<std::string> names;
        std::vector<bool> higher;
        for (const auto& s : j.at("scorers")) {
            names.push_back(s.at("name").get<std::string>());
            higher.push_back(s.value("higher_is_better", true));
        }
        std::vector<ScoredGroup> groups;
        for (const auto& g : j.at("groups")) {
            auto rows = g.at("scores").get<std::vector<std::vector<double>>>();
            if (rows.size() != names.size()) throw Error(ErrorCode::InvalidInput, "score rows do not match scorers");
            const std::size_t n = rows.front().size();
            for (std::size_t k = 0; k < rows.size(); ++k) {
                if (rows[k].size() != n) throw Error(ErrorCode::InvalidInput, "ragged score rows");
                if (!higher[k]) {
                    for (double& v : rows[k]) v = -v;
                }
            }
            std::vector<int> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
            ScoredGroup sg{score_matrix_from_rows(names, ids, std::move(rows)), std::nullopt, std::nullopt};
            if (g.contains("win") && !g.at("win").is_null()) sg.win_id = g.at("win").get<int>();
            if (g.contains("lose") && !g.at("lose").is_null()) sg.lose_id = g.at("lose").get<int>();
            groups.push_back(std::move(sg));
        }
        return metric_match_experiment(groups);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("malformed match fixture: ") + e.what());
    }
}

}  // namespace ttpo
