// SPDX-License-Identifier: Apache-2.0
//
// Preference selection: quality scorers, per-scorer Z-score normalization,
// the averaged hybrid reward, win/lose selection, the scorer-combination
// match experiment, and exhaustive pairwise human selection.
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttpo/candidates.hpp"
#include "ttpo/field.hpp"
#include "ttpo/velocity.hpp"

namespace ttpo {

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::string name() const = 0;
    virtual double score(const Field& f) const = 0;
    virtual bool higher_is_better() const { return true; }
};

/// Mean squared modulus of the highpass spectrum.
class HfEnergyScorer final : public Scorer {
public:
    explicit HfEnergyScorer(double cutoff = 0.9) : cutoff_(cutoff) {}
    std::string name() const override { return "hf_energy"; }
    double score(const Field& f) const override;

private:
    double cutoff_;
};

/// Negated mean absolute forward difference over both axes.
class NegTotalVariationScorer final : public Scorer {
public:
    std::string name() const override { return "neg_total_variation"; }
    double score(const Field& f) const override;
};

/// Log density under a Gaussian-mixture prior.
class MixtureLogLikScorer final : public Scorer {
public:
    explicit MixtureLogLikScorer(std::shared_ptr<const GaussianMixtureField> prior) : prior_(std::move(prior)) {}
    std::string name() const override { return "mixture_loglik"; }
    double score(const Field& f) const override { return prior_->log_density(f); }

private:
    std::shared_ptr<const GaussianMixtureField> prior_;
};

/// Population standard deviation of the values.
class ContrastScorer final : public Scorer {
public:
    std::string name() const override { return "contrast"; }
    double score(const Field& f) const override;
};

/// Mean squared 5-point Laplacian with periodic boundaries.
class LaplacianEnergyScorer final : public Scorer {
public:
    std::string name() const override { return "laplacian_energy"; }
    double score(const Field& f) const override;
};

/// Median absolute Laplacian response scaled to a noise sigma. Lower is better.
class NoiseEstimateScorer final : public Scorer {
public:
    std::string name() const override { return "noise_estimate"; }
    double score(const Field& f) const override;
    bool higher_is_better() const override { return false; }
};

/// Adapter for ad-hoc scorers (fixtures, experiments).
class FunctionScorer final : public Scorer {
public:
    FunctionScorer(std::string name, std::function<double(const Field&)> fn, bool higher_is_better = true)
        : name_(std::move(name)), fn_(std::move(fn)), higher_(higher_is_better) {}
    std::string name() const override { return name_; }
    double score(const Field& f) const override { return fn_(f); }
    bool higher_is_better() const override { return higher_; }

private:
    std::string name_;
    std::function<double(const Field&)> fn_;
    bool higher_;
};

using ScorerList = std::vector<std::shared_ptr<const Scorer>>;

/// Population Z-score. Rows whose spread is zero (relative 1e-12) map to zeros.
/// Throws TooFewCandidates when row.size() < 2.
std::vector<double> zscore_normalize(const std::vector<double>& row);

struct ScoreMatrix {
    std::vector<std::string> scorer_names;
    std::vector<int> candidate_ids;
    std::vector<std::vector<double>> raw;         // [scorer][candidate], as reported
    std::vector<std::vector<double>> normalized;  // oriented higher-is-better, then Z-scored
};

/// Lower-is-better rows are negated before normalization.
ScoreMatrix build_score_matrix(const ScorerList& scorers, const std::vector<const Field*>& fields,
                               const std::vector<int>& ids);
ScoreMatrix build_score_matrix(const ScorerList& scorers, const CandidateSet& set);
/// Normalizes already-oriented raw rows.
ScoreMatrix score_matrix_from_rows(std::vector<std::string> names, std::vector<int> ids,
                                   std::vector<std::vector<double>> oriented_rows);

/// Per-candidate mean of the normalized rows.
std::vector<double> hybrid_reward(const ScoreMatrix& m);

enum class Provenance { HybridMetric, Human };
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct PreferencePair {
    int win_id = 0;
    int lose_id = 1;
    Provenance provenance = Provenance::HybridMetric;
    std::optional<double> win_reward;
    std::optional<double> lose_reward;
    bool degenerate = false;
};

/// argmax / argmin with ties toward the lowest id. All-equal rewards give
/// (ids[0]-order lowest, second lowest) and a warning.
PreferencePair select_pair(const std::vector<double>& rewards, const std::vector<int>& ids, RunLog* log = nullptr);

/// Reward of arbitrary fields against the scorer statistics of a reference
/// pool: mean over scorers of (oriented score - pool mean) / pool std.
class PoolReward {
public:
    PoolReward(ScorerList scorers, const std::vector<const Field*>& pool);
    double operator()(const Field& f) const;

private:
    ScorerList scorers_;
    std::vector<double> mean_;
    std::vector<double> stddev_;
};

struct MatchGroup {
    CandidateSet set;
    std::optional<int> win_id;
    std::optional<int> lose_id;
};

struct MatchReport {
    std::vector<std::string> scorer_names;
    std::vector<std::size_t> matches;
    std::size_t denominator = 0;
    std::size_t triple_count = 0;
    std::size_t triples_per_scorer = 0;

    std::string to_csv() const;
};

/// Every 3-subset of the scorers runs hybrid selection on every group; a
/// group counts as a match for the triple when both win and lose agree with
/// the labels, and each member scorer is credited.
MatchReport metric_match_experiment(const std::vector<MatchGroup>& groups, const ScorerList& scorers);

/// Same experiment over precomputed score matrices (all with the same scorer rows).
struct ScoredGroup {
    ScoreMatrix matrix;
    std::optional<int> win_id;
    std::optional<int> lose_id;
};
MatchReport metric_match_experiment(const std::vector<ScoredGroup>& groups);

std::size_t binomial(std::size_t n, std::size_t k);

/// Single-annotator exhaustive pairwise comparison session.
class PairwiseSession {
public:
    explicit PairwiseSession(std::vector<int> ids);

    /// All unordered pairs (i < j in id-list order), lexicographic.
    const std::vector<std::pair<int, int>>& pairs() const noexcept { return pairs_; }
    const std::vector<int>& ids() const noexcept { return ids_; }

    /// Records a choice. Returns false when the pair was already answered.
    /// Throws InvalidInput for a bad index or a winner outside the pair.
    bool record(std::size_t pair_index, int winner_id);

    std::size_t answered() const noexcept;
    std::size_t total() const noexcept { return pairs_.size(); }
    bool complete() const noexcept { return answered() == total(); }
    const std::vector<std::optional<int>>& choices() const noexcept { return choices_; }

    std::map<int, std::size_t> counts() const;
    /// Present only once every pair is answered.
    std::optional<PreferencePair> result() const;

private:
    std::vector<int> ids_;
    std::vector<std::pair<int, int>> pairs_;
    std::vector<std::optional<int>> choices_;
};

/// Most-chosen id wins, least-chosen among the rest loses; ties to the lowest id.
PreferencePair pair_from_counts(const std::vector<int>& ids, const std::map<int, std::size_t>& counts);

/// Sum of counts across annotators' sessions over the same candidate ids.
std::map<int, std::size_t> merge_counts(const std::vector<PairwiseSession>& sessions);

}  // namespace ttpo
