#include "fuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fuse/parallel.hpp"

namespace fuse {

Metric metric_from_string(const std::string& name) {
    if (name == "precision") return Metric::precision;
    if (name == "recall") return Metric::recall;
    if (name == "f1") return Metric::f1;
    throw ValidationError("unknown metric \"" + name + "\" (expected precision|recall|f1)");
}

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::precision: return "precision";
        case Metric::recall: return "recall";
        default: return "f1";
    }
}

namespace {

UserScore score_from_counts(std::size_t hits, std::size_t retrieved, std::size_t relevant) {
    UserScore s;
    s.precision = retrieved > 0 ? static_cast<double>(hits) / static_cast<double>(retrieved) : 0.0;
    s.recall = static_cast<double>(hits) / static_cast<double>(relevant);
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

/// Shared per-user scoring loop. `weight_for(u)` supplies the weight vector;
/// results land in per-index slots so the reduction is thread-count
/// independent.
template <typename WeightFor>
std::vector<std::optional<UserScore>> score_users(const Dataset& ds, WeightFor&& weight_for,
                                                  std::int32_t budget, int threads,
                                                  const std::vector<UserIndex>* subset) {
    std::vector<UserIndex> users;
    if (subset) {
        users = *subset;
    } else {
        users.resize(ds.num_users());
        std::iota(users.begin(), users.end(), 0);
    }
    std::vector<std::optional<UserScore>> scores(ds.num_users());
    struct Scratch {
        MergeScratch merge;
        MergeScratch truth_marks;
    };
    parallel_for(users.size(), threads, [&, sc = Scratch{}](std::size_t idx) mutable {
        const UserIndex user = users[idx];
        const auto& rel = ds.truth.relevant[static_cast<std::size_t>(user)];
        if (rel.empty()) return;
        const MergedSet merged = merge_user(ds, user, weight_for(user), budget, sc.merge);
        sc.truth_marks.reset(static_cast<std::size_t>(ds.item_universe_size()));
        for (ItemIndex it : rel) sc.truth_marks.test_and_set(it);
        std::size_t hits = 0;
        for (ItemIndex it : merged.items) {
            hits += sc.truth_marks.stamp[static_cast<std::size_t>(it)] == sc.truth_marks.generation;
        }
        scores[static_cast<std::size_t>(user)] = score_from_counts(hits, merged.items.size(), rel.size());
    });
    return scores;
}

EvalReport report_from_scores(std::vector<std::optional<UserScore>> scores, std::int32_t budget) {
    EvalReport report;
    report.budget = budget;
    double p = 0.0, r = 0.0, f = 0.0;
    std::size_t n = 0;
    for (const auto& s : scores) {
        if (!s) continue;
        p += s->precision;
        r += s->recall;
        f += s->f1;
        ++n;
    }
    report.user_count = n;
    if (n > 0) {
        report.mean_precision = p / static_cast<double>(n);
        report.mean_recall = r / static_cast<double>(n);
        report.mean_f1 = f / static_cast<double>(n);
    }
    report.per_user = std::move(scores);
    return report;
}

double objective_from_scores(const std::vector<std::optional<UserScore>>& scores, Metric metric) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : scores) {
        if (!s) continue;
        sum += s->get(metric);
        ++n;
    }
    if (n == 0) throw ValidationError("no users with ground truth to evaluate");
    return sum / static_cast<double>(n);
}

} // namespace

UserScore evaluate_user(const MergedSet& merged, const GroundTruth& truth) {
    const auto& rel = truth.relevant[static_cast<std::size_t>(merged.user)];
    if (rel.empty()) {
        throw ValidationError("user index " + std::to_string(merged.user) +
                              " has no ground truth");
    }
    std::unordered_set<ItemIndex> rel_set(rel.begin(), rel.end());
    std::size_t hits = 0;
    for (ItemIndex it : merged.items) hits += rel_set.count(it);
    return score_from_counts(hits, merged.items.size(), rel.size());
}

EvalReport evaluate_merged(const Dataset& ds, const std::vector<MergedSet>& merged,
                           std::int32_t budget) {
    std::vector<std::optional<UserScore>> scores(ds.num_users());
    for (const auto& m : merged) {
        const auto& rel = ds.truth.relevant[static_cast<std::size_t>(m.user)];
        if (rel.empty()) continue;
        scores[static_cast<std::size_t>(m.user)] = evaluate_user(m, ds.truth);
    }
    return report_from_scores(std::move(scores), budget);
}

EvalReport evaluate(const Dataset& ds, const WeightVector& w, std::int32_t budget, int threads) {
    w.validate();
    return report_from_scores(score_users(ds, [&](UserIndex) -> const WeightVector& { return w; },
                                          budget, threads, nullptr),
                              budget);
}

EvalReport evaluate(const Dataset& ds, const PersonalizedWeights& pw, std::int32_t budget,
                    int threads) {
    if (pw.per_user.size() != ds.num_users()) {
        throw ValidationError("personalized weights are not aligned with the dataset");
    }
    return report_from_scores(
        score_users(ds,
                    [&](UserIndex u) -> const WeightVector& {
                        const auto& w = pw.per_user[static_cast<std::size_t>(u)];
                        if (w.w.empty()) {
                            throw ValidationError("personalized weights missing user \"" +
                                                  ds.users[static_cast<std::size_t>(u)] + "\"");
                        }
                        return w;
                    },
                    budget, threads, nullptr),
        budget);
}

double evaluate_objective(const Dataset& ds, const WeightVector& w, std::int32_t budget,
                          Metric metric, int threads, const std::vector<UserIndex>* user_subset) {
    w.validate();
    return objective_from_scores(
        score_users(ds, [&](UserIndex) -> const WeightVector& { return w; }, budget, threads,
                    user_subset),
        metric);
}

double evaluate_objective(const Dataset& ds, const PersonalizedWeights& pw, std::int32_t budget,
                          Metric metric, int threads, const std::vector<UserIndex>* user_subset) {
    if (pw.per_user.size() != ds.num_users()) {
        throw ValidationError("personalized weights are not aligned with the dataset");
    }
    return objective_from_scores(
        score_users(ds,
                    [&](UserIndex u) -> const WeightVector& {
                        const auto& w = pw.per_user[static_cast<std::size_t>(u)];
                        if (w.w.empty()) {
                            throw ValidationError("personalized weights missing user \"" +
                                                  ds.users[static_cast<std::size_t>(u)] + "\"");
                        }
                        return w;
                    },
                    budget, threads, user_subset),
        metric);
}

std::vector<std::vector<double>> jaccard_matrix(const Dataset& ds, int threads) {
    const std::size_t k_channels = ds.num_channels();
    std::vector<std::vector<double>> mat(k_channels, std::vector<double>(k_channels, 1.0));
    if (ds.num_users() == 0) return mat;

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < k_channels; ++a) {
        for (std::size_t b = a + 1; b < k_channels; ++b) pairs.emplace_back(a, b);
    }
    std::vector<double> values(pairs.size(), 0.0);
    parallel_for(pairs.size(), threads, [&, marks = MergeScratch{}](std::size_t p) mutable {
        const auto [a, b] = pairs[p];
        double sum = 0.0;
        for (std::size_t u = 0; u < ds.num_users(); ++u) {
            const auto& la = ds.channels[a].lists[u];
            const auto& lb = ds.channels[b].lists[u];
            if (la.empty() && lb.empty()) {
                sum += 1.0;  // identical (empty) lists
                continue;
            }
            marks.reset(static_cast<std::size_t>(ds.item_universe_size()));
            for (ItemIndex it : la) marks.test_and_set(it);
            std::size_t inter = 0;
            for (ItemIndex it : lb) {
                inter += marks.stamp[static_cast<std::size_t>(it)] == marks.generation;
            }
            const std::size_t uni = la.size() + lb.size() - inter;
            sum += static_cast<double>(inter) / static_cast<double>(uni);
        }
        values[p] = sum / static_cast<double>(ds.num_users());
    });
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        mat[pairs[p].first][pairs[p].second] = values[p];
        mat[pairs[p].second][pairs[p].first] = values[p];
    }
    return mat;
}

std::vector<std::vector<double>> channel_user_recalls(const Dataset& ds) {
    std::vector<std::vector<double>> recalls(ds.num_channels(),
                                             std::vector<double>(ds.num_users(), 0.0));
    MergeScratch marks;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        const auto& rel = ds.truth.relevant[u];
        if (rel.empty()) continue;
        marks.reset(static_cast<std::size_t>(ds.item_universe_size()));
        for (ItemIndex it : rel) marks.test_and_set(it);
        for (std::size_t k = 0; k < ds.num_channels(); ++k) {
            std::size_t hits = 0;
            for (ItemIndex it : ds.channels[k].lists[u]) {
                hits += marks.stamp[static_cast<std::size_t>(it)] == marks.generation;
            }
            recalls[k][u] = static_cast<double>(hits) / static_cast<double>(rel.size());
        }
    }
    return recalls;
}

std::vector<ChannelUserRanking> channel_user_rankings(const Dataset& ds) {
    const auto recalls = channel_user_recalls(ds);
    std::vector<UserIndex> evaluated;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        if (!ds.truth.relevant[u].empty()) evaluated.push_back(static_cast<UserIndex>(u));
    }
    std::vector<ChannelUserRanking> out(ds.num_channels());
    for (std::size_t k = 0; k < ds.num_channels(); ++k) {
        out[k].channel_id = static_cast<int>(k);
        out[k].users_ranked = evaluated;
        // descending recall, ties by ascending user id (== ascending index)
        std::stable_sort(out[k].users_ranked.begin(), out[k].users_ranked.end(),
                         [&](UserIndex a, UserIndex b) {
                             return recalls[k][static_cast<std::size_t>(a)] >
                                    recalls[k][static_cast<std::size_t>(b)];
                         });
    }
    return out;
}

double rbo_pair(const ChannelUserRanking& r1, const ChannelUserRanking& r2, double p,
                std::size_t depth) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("RBO persistence p must lie in (0, 1)");
    }
    if (r1.users_ranked.size() != r2.users_ranked.size()) {
        throw ValidationError("RBO rankings must cover the same user set");
    }
    {
        auto a = r1.users_ranked;
        auto b = r2.users_ranked;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) throw ValidationError("RBO rankings must cover the same user set");
    }
    const std::size_t n = r1.users_ranked.size();
    if (depth < 1 || depth > n) {
        throw ValidationError("RBO depth must lie in [1, N]");
    }

    std::unordered_set<UserIndex> pending;  // seen in exactly one ranking so far
    std::size_t overlap = 0;
    double weight = 1.0;  // p^(d-1)
    double sum = 0.0;
    for (std::size_t d = 0; d < depth; ++d) {
        const UserIndex a = r1.users_ranked[d];
        const UserIndex b = r2.users_ranked[d];
        if (a == b) {
            ++overlap;
        } else {
            if (pending.erase(a)) ++overlap; else pending.insert(a);
            if (pending.erase(b)) ++overlap; else pending.insert(b);
        }
        sum += weight * static_cast<double>(overlap) / static_cast<double>(d + 1);
        weight *= p;
    }
    return (1.0 - p) * sum;
}

std::vector<std::vector<double>> rbo_matrix(const Dataset& ds, double p, std::size_t depth) {
    const auto rankings = channel_user_rankings(ds);
    const std::size_t k_channels = rankings.size();
    const std::size_t n = k_channels > 0 ? rankings[0].users_ranked.size() : 0;
    if (n == 0) throw ValidationError("no evaluated users for RBO");
    if (depth == 0) depth = n;
    std::vector<std::vector<double>> mat(k_channels, std::vector<double>(k_channels, 0.0));
    for (std::size_t a = 0; a < k_channels; ++a) {
        for (std::size_t b = a; b < k_channels; ++b) {
            const double v = rbo_pair(rankings[a], rankings[b], p, depth);
            mat[a][b] = v;
            mat[b][a] = v;
        }
    }
    return mat;
}

double item_coverage(const std::vector<MergedSet>& merged, std::int64_t universe_size) {
    if (universe_size < 1) throw ValidationError("item universe size must be >= 1");
    std::unordered_set<ItemIndex> covered;
    for (const auto& m : merged) covered.insert(m.items.begin(), m.items.end());
    return static_cast<double>(covered.size()) / static_cast<double>(universe_size);
}

} // namespace fuse
