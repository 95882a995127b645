// SPDX-License-Identifier: Apache-2.0
#include "ttpo/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ttpo/error.hpp"

namespace ttpo {

// ---------------------------------------------------------------------------
// Builtin scorers

double HfEnergyScorer::score(const Field& f) const {
    const auto mask = gaussian_lowpass_mask(f.height(), f.width(), cutoff_);
    const auto parts = split_frequency(f, mask);
    return parts.high.energy() / static_cast<double>(f.size());
}

double NegTotalVariationScorer::score(const Field& f) const {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < f.height(); ++r) {
        for (std::size_t c = 0; c < f.width(); ++c) {
            if (c + 1 < f.width()) {
                total += std::abs(f(r, c + 1) - f(r, c));
                ++count;
            }
            if (r + 1 < f.height()) {
                total += std::abs(f(r + 1, c) - f(r, c));
                ++count;
            }
        }
    }
    return count == 0 ? 0.0 : -total / static_cast<double>(count);
}

double ContrastScorer::score(const Field& f) const {
    const double n = static_cast<double>(f.size());
    const double mean = std::accumulate(f.data().begin(), f.data().end(), 0.0) / n;
    double ss = 0.0;
    for (double v : f.data()) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / n);
}

namespace {

std::vector<double> periodic_laplacian(const Field& f) {
    const std::size_t h = f.height(), w = f.width();
    std::vector<double> out(f.size());
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double up = f((r + h - 1) % h, c), down = f((r + 1) % h, c);
            const double left = f(r, (c + w - 1) % w), right = f(r, (c + 1) % w);
            out[r * w + c] = up + down + left + right - 4.0 * f(r, c);
        }
    }
    return out;
}

}  // namespace

double LaplacianEnergyScorer::score(const Field& f) const {
    const auto lap = periodic_laplacian(f);
    double s = 0.0;
    for (double v : lap) s += v * v;
    return s / static_cast<double>(lap.size());
}

double NoiseEstimateScorer::score(const Field& f) const {
    auto lap = periodic_laplacian(f);
    for (double& v : lap) v = std::abs(v);
    const std::size_t mid = lap.size() / 2;
    std::nth_element(lap.begin(), lap.begin() + static_cast<std::ptrdiff_t>(mid), lap.end());
    // White noise of std s gives a Laplacian response of std s*sqrt(20).
    return lap[mid] / (0.6744897501960817 * std::sqrt(20.0));
}

// ---------------------------------------------------------------------------
// Normalization and hybrid reward

std::vector<double> zscore_normalize(const std::vector<double>& row) {
    if (row.size() < 2) throw Error(ErrorCode::TooFewCandidates, "Z-score needs at least two values");
    const double n = static_cast<double>(row.size());
    double mean = std::accumulate(row.begin(), row.end(), 0.0) / n;
    // Second pass corrects the rounding of the first when the offset dwarfs the spread.
    double resid = 0.0;
    for (double v : row) resid += v - mean;
    mean += resid / n;
    double ss = 0.0, max_abs = 0.0;
    for (double v : row) {
        ss += (v - mean) * (v - mean);
        max_abs = std::max(max_abs, std::abs(v));
    }
    const double sd = std::sqrt(ss / n);
    std::vector<double> out(row.size(), 0.0);
    if (sd <= 1e-12 * max_abs || sd == 0.0) return out;
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - mean) / sd;
    // The mean itself is only representable to ulp(max_abs); one refinement
    // pass in z space, where values are O(1), removes that residue.
    const double zmean = std::accumulate(out.begin(), out.end(), 0.0) / n;
    double zss = 0.0;
    for (double& v : out) {
        v -= zmean;
        zss += v * v;
    }
    const double zsd = std::sqrt(zss / n);
    for (double& v : out) v /= zsd;
    return out;
}

ScoreMatrix score_matrix_from_rows(std::vector<std::string> names, std::vector<int> ids,
                                   std::vector<std::vector<double>> oriented_rows) {
    if (oriented_rows.empty()) throw Error(ErrorCode::InvalidInput, "score matrix needs at least one scorer");
    if (names.size() != oriented_rows.size()) throw Error(ErrorCode::InvalidInput, "scorer name count mismatch");
    for (const auto& row : oriented_rows) {
        if (row.size() != ids.size()) throw Error(ErrorCode::InvalidInput, "score row length mismatch");
        for (double v : row) {
            if (!std::isfinite(v)) throw Error(ErrorCode::InvalidInput, "non-finite score");
        }
    }
    ScoreMatrix m;
    m.scorer_names = std::move(names);
    m.candidate_ids = std::move(ids);
    m.normalized.reserve(oriented_rows.size());
    for (const auto& row : oriented_rows) m.normalized.push_back(zscore_normalize(row));
    m.raw = std::move(oriented_rows);
    return m;
}

ScoreMatrix build_score_matrix(const ScorerList& scorers, const std::vector<const Field*>& fields,
                               const std::vector<int>& ids) {
    if (scorers.empty()) throw Error(ErrorCode::InvalidInput, "no scorers configured");
    if (fields.size() != ids.size()) throw Error(ErrorCode::InvalidInput, "field/id count mismatch");
    if (fields.size() < 2) throw Error(ErrorCode::TooFewCandidates, "selection needs at least two candidates");
    std::vector<std::string> names;
    std::vector<std::vector<double>> raw, oriented;
    for (const auto& s : scorers) {
        names.push_back(s->name());
        std::vector<double> row;
        row.reserve(fields.size());
        for (const Field* f : fields) row.push_back(s->score(*f));
        std::vector<double> o = row;
        if (!s->higher_is_better()) {
            for (double& v : o) v = -v;
        }
        raw.push_back(std::move(row));
        oriented.push_back(std::move(o));
    }
    ScoreMatrix m = score_matrix_from_rows(std::move(names), ids, std::move(oriented));
    m.raw = std::move(raw);
    return m;
}

ScoreMatrix build_score_matrix(const ScorerList& scorers, const CandidateSet& set) {
    std::vector<const Field*> fields;
    std::vector<int> ids;
    for (const auto& c : set.candidates) {
        fields.push_back(&c.field);
        ids.push_back(c.id);
    }
    return build_score_matrix(scorers, fields, ids);
}

std::vector<double> hybrid_reward(const ScoreMatrix& m) {
    if (m.normalized.empty() || m.normalized.front().empty()) {
        throw Error(ErrorCode::InvalidInput, "empty score matrix");
    }
    const std::size_t n = m.normalized.front().size();
    std::vector<double> r(n, 0.0);
    for (const auto& row : m.normalized) {
        if (row.size() != n) throw Error(ErrorCode::InvalidInput, "ragged score matrix");
        for (std::size_t i = 0; i < n; ++i) r[i] += row[i];
    }
    const double k = static_cast<double>(m.normalized.size());
    for (double& v : r) v /= k;
    return r;
}

std::string_view to_string(Provenance p) {
    return p == Provenance::Human ? "human" : "hybrid-metric";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "human") return Provenance::Human;
    if (s == "hybrid-metric") return Provenance::HybridMetric;
    throw Error(ErrorCode::InvalidInput, "unknown provenance '" + std::string(s) + "'");
}

PreferencePair select_pair(const std::vector<double>& rewards, const std::vector<int>& ids, RunLog* log) {
    if (rewards.size() != ids.size()) throw Error(ErrorCode::InvalidInput, "reward/id count mismatch");
    if (rewards.size() < 2) throw Error(ErrorCode::TooFewCandidates, "selection needs at least two candidates");

    std::size_t best = 0, worst = 0;
    for (std::size_t i = 1; i < rewards.size(); ++i) {
        if (rewards[i] > rewards[best] || (rewards[i] == rewards[best] && ids[i] < ids[best])) best = i;
        if (rewards[i] < rewards[worst] || (rewards[i] == rewards[worst] && ids[i] < ids[worst])) worst = i;
    }

    PreferencePair p;
    p.provenance = Provenance::HybridMetric;
    if (rewards[best] == rewards[worst]) {
        std::vector<std::size_t> order(ids.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
        best = order[0];
        worst = order[1];
        p.degenerate = true;
        if (log) log->warn("degenerate selection: all rewards equal; using the two lowest ids");
    }
    p.win_id = ids[best];
    p.lose_id = ids[worst];
    p.win_reward = rewards[best];
    p.lose_reward = rewards[worst];
    return p;
}

// ---------------------------------------------------------------------------
// PoolReward

PoolReward::PoolReward(ScorerList scorers, const std::vector<const Field*>& pool) : scorers_(std::move(scorers)) {
    if (scorers_.empty()) throw Error(ErrorCode::InvalidInput, "no scorers configured");
    if (pool.size() < 2) throw Error(ErrorCode::TooFewCandidates, "reference pool needs at least two fields");
    for (const auto& s : scorers_) {
        const double sign = s->higher_is_better() ? 1.0 : -1.0;
        std::vector<double> row;
        for (const Field* f : pool) row.push_back(sign * s->score(*f));
        const double n = static_cast<double>(row.size());
        const double mean = std::accumulate(row.begin(), row.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : row) ss += (v - mean) * (v - mean);
        mean_.push_back(mean);
        stddev_.push_back(std::sqrt(ss / n));
    }
}

double PoolReward::operator()(const Field& f) const {
    double total = 0.0;
    for (std::size_t k = 0; k < scorers_.size(); ++k) {
        if (stddev_[k] == 0.0) continue;
        const double sign = scorers_[k]->higher_is_better() ? 1.0 : -1.0;
        total += (sign * scorers_[k]->score(f) - mean_[k]) / stddev_[k];
    }
    return total / static_cast<double>(scorers_.size());
}

// ---------------------------------------------------------------------------
// Match experiment

std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

std::string MatchReport::to_csv() const {
    std::ostringstream os;
    os << "scorer,matches,denominator\n";
    for (std::size_t k = 0; k < scorer_names.size(); ++k) {
        os << scorer_names[k] << ',' << matches[k] << ',' << denominator << '\n';
    }
    return os.str();
}

MatchReport metric_match_experiment(const std::vector<MatchGroup>& groups, const ScorerList& scorers) {
    if (scorers.size() < 3) throw Error(ErrorCode::InvalidInput, "match experiment needs at least three scorers");
    std::vector<ScoredGroup> scored;
    scored.reserve(groups.size());
    for (const auto& g : groups) {
        if (!g.win_id || !g.lose_id) throw Error(ErrorCode::InvalidInput, "match group is missing its labels");
        (void)g.set.by_id(*g.win_id);
        (void)g.set.by_id(*g.lose_id);
        scored.push_back({build_score_matrix(scorers, g.set), g.win_id, g.lose_id});
    }
    return metric_match_experiment(scored);
}

MatchReport metric_match_experiment(const std::vector<ScoredGroup>& groups) {
    if (groups.empty()) throw Error(ErrorCode::InvalidInput, "match experiment needs at least one group");
    const std::size_t k = groups.front().matrix.normalized.size();
    if (k < 3) throw Error(ErrorCode::InvalidInput, "match experiment needs at least three scorers");

    MatchReport report;
    report.scorer_names = groups.front().matrix.scorer_names;
    report.matches.assign(k, 0);
    report.triple_count = binomial(k, 3);
    report.triples_per_scorer = binomial(k - 1, 2);
    report.denominator = groups.size() * report.triples_per_scorer;

    for (const auto& g : groups) {
        if (!g.win_id || !g.lose_id) throw Error(ErrorCode::InvalidInput, "match group is missing its labels");
        const ScoreMatrix& m = g.matrix;
        if (m.normalized.size() != k) throw Error(ErrorCode::InvalidInput, "match groups disagree on scorer count");

        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a + 1; b < k; ++b) {
                for (std::size_t c = b + 1; c < k; ++c) {
                    ScoreMatrix sub;
                    sub.normalized = {m.normalized[a], m.normalized[b], m.normalized[c]};
                    const PreferencePair p = select_pair(hybrid_reward(sub), m.candidate_ids);
                    if (p.win_id == *g.win_id && p.lose_id == *g.lose_id) {
                        ++report.matches[a];
                        ++report.matches[b];
                        ++report.matches[c];
                    }
                }
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Pairwise human selection

PairwiseSession::PairwiseSession(std::vector<int> ids) : ids_(std::move(ids)) {
    if (ids_.size() < 2) throw Error(ErrorCode::TooFewCandidates, "pairwise selection needs at least two candidates");
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        for (std::size_t j = i + 1; j < ids_.size(); ++j) pairs_.emplace_back(ids_[i], ids_[j]);
    }
    choices_.assign(pairs_.size(), std::nullopt);
}

bool PairwiseSession::record(std::size_t pair_index, int winner_id) {
    if (pair_index >= pairs_.size()) throw Error(ErrorCode::InvalidInput, "pair index out of range");
    const auto [a, b] = pairs_[pair_index];
    if (winner_id != a && winner_id != b) throw Error(ErrorCode::InvalidInput, "winner is not part of the pair");
    if (choices_[pair_index]) return false;
    choices_[pair_index] = winner_id;
    return true;
}

std::size_t PairwiseSession::answered() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(choices_.begin(), choices_.end(), [](const auto& c) { return c.has_value(); }));
}

std::map<int, std::size_t> PairwiseSession::counts() const {
    std::map<int, std::size_t> out;
    for (int id : ids_) out[id] = 0;
    for (const auto& c : choices_) {
        if (c) ++out[*c];
    }
    return out;
}

std::optional<PreferencePair> PairwiseSession::result() const {
    if (!complete()) return std::nullopt;
    return pair_from_counts(ids_, counts());
}

PreferencePair pair_from_counts(const std::vector<int>& ids, const std::map<int, std::size_t>& counts) {
    if (ids.size() < 2) throw Error(ErrorCode::TooFewCandidates, "pairwise selection needs at least two candidates");
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    auto count_of = [&](int id) {
        auto it = counts.find(id);
        return it == counts.end() ? std::size_t{0} : it->second;
    };
    int win = sorted.front();
    for (int id : sorted) {
        if (count_of(id) > count_of(win)) win = id;
    }
    std::optional<int> lose;
    for (int id : sorted) {
        if (id == win) continue;
        if (!lose || count_of(id) < count_of(*lose)) lose = id;
    }
    PreferencePair p;
    p.win_id = win;
    p.lose_id = *lose;
    p.provenance = Provenance::Human;
    p.win_reward = static_cast<double>(count_of(win));
    p.lose_reward = static_cast<double>(count_of(*lose));
    return p;
}

std::map<int, std::size_t> merge_counts(const std::vector<PairwiseSession>& sessions) {
    std::map<int, std::size_t> total;
    for (const auto& s : sessions) {
        if (!sessions.empty() && s.ids() != sessions.front().ids()) {
            throw Error(ErrorCode::InvalidInput, "sessions cover different candidate ids");
        }
        for (const auto& [id, n] : s.counts()) total[id] += n;
    }
    return total;
}

}  // namespace ttpo
