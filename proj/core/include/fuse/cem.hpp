#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fuse/dataset.hpp"
#include "fuse/dirichlet.hpp"
#include "fuse/metrics.hpp"

namespace fuse::cem {

struct CemConfig {
    int samples_per_iter = 60;    // Q
    double elite_fraction = 0.1;  // q
    double eta1 = 0.1;
    double eta1_decay = 0.95;  // applied when the best score does not improve
    int patience = 5;
    int max_iters = 100;
    dirichlet::DirichletParams alpha0;  // empty -> all-ones
    Metric metric = Metric::recall;
    std::uint64_t master_seed = 0;
    std::optional<WeightBounds> bounds;
    /// Fixed evaluation subsample; empty means all users.
    std::vector<UserIndex> eval_users;

    void validate(std::size_t n_channels) const;
};

struct IterationStats {
    int iter = 0;
    double mean_score = 0.0;
    double best_score = 0.0;
    double gamma = 0.0;
    std::vector<double> alpha;  // post-update snapshot
};

struct CemState {
    int iter = 0;
    dirichlet::DirichletParams alpha;
    double gamma = 0.0;
    /// Highest single-sample score seen; drives patience and the eta decay.
    double best_score = -std::numeric_limits<double>::infinity();
    /// The iterate whose mean weights evaluated best, and that score.
    dirichlet::DirichletParams best_alpha;
    double best_alpha_score = -std::numeric_limits<double>::infinity();
    double eta1 = 0.0;  // current, after decay
    int no_improve_streak = 0;
    std::vector<IterationStats> history;
};

struct EliteSelection {
    double threshold = 0.0;               // gamma_t
    std::vector<std::size_t> elite_idx;   // all samples scoring >= threshold
};

/// Order-statistic elite selection: with Qe = ceil(q*Q), the threshold is
/// the (Q-Qe+1)-th smallest score and every sample at or above it is elite
/// (ties can push the elite count past Qe).
EliteSelection select_elites(const std::vector<double>& scores, double elite_fraction);

/// Smoothed concentration update (1-eta1)*current + eta1*target.
dirichlet::DirichletParams update_params(const dirichlet::DirichletParams& current,
                                         const dirichlet::DirichletParams& target, double eta1);

/// xi*initial + (1-xi)*optimized, xi in [0,1].
dirichlet::DirichletParams interpolate_params(const dirichlet::DirichletParams& initial,
                                              const dirichlet::DirichletParams& optimized,
                                              double xi);

struct CemResult {
    CemState state;
    WeightVector weights;  // mean of best_alpha
};

/// Sample-evaluate-select-refit loop over Dirichlet concentrations. The
/// incumbent (best_alpha) is the smoothed iterate whose mean weights scored
/// best on the objective, so neither a lucky early sample nor drift after
/// convergence can degrade the returned weights. Patience and the eta decay
/// react to strict improvement of the best sample score.
CemResult run_cem(const Dataset& ds, const CemConfig& cfg, std::int32_t budget, int threads = 1);

/// Continues from a checkpointed state (same config and dataset); the
/// combined trajectory is bit-identical to an uninterrupted run.
CemResult run_cem(const Dataset& ds, const CemConfig& cfg, std::int32_t budget, CemState state,
                  int threads = 1);

void save_checkpoint(const CemState& state, const std::string& path);
CemState load_checkpoint(const std::string& path);

/// History as RFC-4180 CSV: iter,mean_score,best_score,gamma.
std::string history_csv(const CemState& state);

} // namespace fuse::cem
