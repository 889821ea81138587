#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fuse/dataset.hpp"
#include "fuse/fusion.hpp"

namespace fuse {

enum class Metric { precision, recall, f1 };

Metric metric_from_string(const std::string& name);
const char* metric_name(Metric m);

struct UserScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    double get(Metric m) const {
        switch (m) {
            case Metric::precision: return precision;
            case Metric::recall: return recall;
            default: return f1;
        }
    }
};

/// Per-user and mean precision/recall/F1 at the merge budget L. Users without
/// ground truth carry no entry and do not count toward the means.
struct EvalReport {
    std::int32_t budget = 0;
    std::size_t user_count = 0;  // users with ground truth
    std::vector<std::optional<UserScore>> per_user;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;

    double mean(Metric m) const {
        switch (m) {
            case Metric::precision: return mean_precision;
            case Metric::recall: return mean_recall;
            default: return mean_f1;
        }
    }
};

/// Precision / recall / guarded-harmonic F1 of one merged set against the
/// user's relevant set. Throws when the user has no ground truth.
UserScore evaluate_user(const MergedSet& merged, const GroundTruth& truth);

EvalReport evaluate_merged(const Dataset& ds, const std::vector<MergedSet>& merged,
                           std::int32_t budget);
EvalReport evaluate(const Dataset& ds, const WeightVector& w, std::int32_t budget,
                    int threads = 1);
EvalReport evaluate(const Dataset& ds, const PersonalizedWeights& pw, std::int32_t budget,
                    int threads = 1);

/// The black-box objective S(w): the chosen metric averaged over evaluated
/// users (optionally a fixed subset). This is what CEM, BayesOpt, and the
/// policy-gradient rewards consume.
double evaluate_objective(const Dataset& ds, const WeightVector& w, std::int32_t budget,
                          Metric metric, int threads = 1,
                          const std::vector<UserIndex>* user_subset = nullptr);
double evaluate_objective(const Dataset& ds, const PersonalizedWeights& pw, std::int32_t budget,
                          Metric metric, int threads = 1,
                          const std::vector<UserIndex>* user_subset = nullptr);

/// Mean over users of the pairwise Jaccard similarity between channel lists.
/// Symmetric, unit diagonal.
std::vector<std::vector<double>> jaccard_matrix(const Dataset& ds, int threads = 1);

/// Users ordered by their recall under one channel's full list, descending;
/// ties broken by ascending user id. Covers only users with ground truth.
struct ChannelUserRanking {
    int channel_id = 0;
    std::vector<UserIndex> users_ranked;
};

/// Per-channel, per-user recall of the full channel list ([channel][user]).
std::vector<std::vector<double>> channel_user_recalls(const Dataset& ds);

std::vector<ChannelUserRanking> channel_user_rankings(const Dataset& ds);

/// Truncated rank-biased overlap of two user rankings over the same user
/// set: (1-p) * sum_{d=1..D} p^(d-1) * overlap(d)/d.
double rbo_pair(const ChannelUserRanking& r1, const ChannelUserRanking& r2, double p,
                std::size_t depth);

/// Pairwise RBO between all channel user rankings. depth == 0 means "use the
/// full ranking length".
std::vector<std::vector<double>> rbo_matrix(const Dataset& ds, double p, std::size_t depth = 0);

/// Fraction of the item universe covered by at least one merged set.
double item_coverage(const std::vector<MergedSet>& merged, std::int64_t universe_size);

} // namespace fuse
