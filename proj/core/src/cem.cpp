#include "fuse/cem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "fuse/parallel.hpp"
#include "fuse/rng.hpp"

using nlohmann::json;

namespace fuse::cem {

namespace {
constexpr std::uint64_t kSampleTag = 0xCE3Au;
}

void CemConfig::validate(std::size_t n_channels) const {
    if (samples_per_iter < 2) throw ValidationError("CEM needs at least 2 samples per iteration");
    if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
        throw ValidationError("elite fraction must lie in (0, 1]");
    }
    const int elites = static_cast<int>(
        std::ceil(elite_fraction * static_cast<double>(samples_per_iter)));
    if (elites < 2) {
        throw ValidationError("elite fraction * samples must give at least 2 elites (MLE needs 2)");
    }
    if (!(eta1 > 0.0 && eta1 <= 1.0)) throw ValidationError("eta1 must lie in (0, 1]");
    if (!(eta1_decay > 0.0 && eta1_decay <= 1.0)) {
        throw ValidationError("eta1 decay must lie in (0, 1]");
    }
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
    if (!alpha0.alpha.empty()) {
        alpha0.validate();
        if (alpha0.size() != n_channels) {
            throw ValidationError("alpha0 dimension does not match channel count");
        }
    }
    if (bounds) {
        const double k = static_cast<double>(n_channels);
        if (k * bounds->w_min > 1.0 + 1e-12 || k * bounds->w_max < 1.0 - 1e-12) {
            throw ValidationError("infeasible weight bounds for this channel count");
        }
    }
}

EliteSelection select_elites(const std::vector<double>& scores, double elite_fraction) {
    if (scores.empty()) throw ValidationError("no scores to select elites from");
    if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
        throw ValidationError("elite fraction must lie in (0, 1]");
    }
    const std::size_t q_count = scores.size();
    const std::size_t elite_count = static_cast<std::size_t>(
        std::ceil(elite_fraction * static_cast<double>(q_count)));

    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    EliteSelection sel;
    sel.threshold = sorted[q_count - elite_count];  // (Q - Qe + 1)-th smallest
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] >= sel.threshold) sel.elite_idx.push_back(i);
    }
    return sel;
}

dirichlet::DirichletParams update_params(const dirichlet::DirichletParams& current,
                                         const dirichlet::DirichletParams& target, double eta1) {
    current.validate();
    target.validate();
    if (current.size() != target.size()) {
        throw ValidationError("concentration dimension mismatch in update");
    }
    std::vector<double> next(current.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] = (1.0 - eta1) * current.alpha[i] + eta1 * target.alpha[i];
    }
    return dirichlet::DirichletParams::clamped(std::move(next));
}

dirichlet::DirichletParams interpolate_params(const dirichlet::DirichletParams& initial,
                                              const dirichlet::DirichletParams& optimized,
                                              double xi) {
    if (!(xi >= 0.0 && xi <= 1.0)) throw ValidationError("xi must lie in [0, 1]");
    initial.validate();
    optimized.validate();
    if (initial.size() != optimized.size()) {
        throw ValidationError("concentration dimension mismatch in interpolation");
    }
    std::vector<double> mix(initial.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        mix[i] = xi * initial.alpha[i] + (1.0 - xi) * optimized.alpha[i];
    }
    return dirichlet::DirichletParams::clamped(std::move(mix));
}

CemResult run_cem(const Dataset& ds, const CemConfig& cfg, std::int32_t budget, CemState state,
                  int threads) {
    cfg.validate(ds.num_channels());
    const std::size_t k_channels = ds.num_channels();

    if (state.alpha.alpha.empty()) {
        state.alpha = cfg.alpha0.alpha.empty() ? dirichlet::DirichletParams::ones(k_channels)
                                               : cfg.alpha0;
        state.best_alpha = state.alpha;
        state.eta1 = cfg.eta1;
    }
    if (state.alpha.size() != k_channels) {
        throw ValidationError("checkpoint state does not match channel count");
    }

    const std::vector<UserIndex>* subset = cfg.eval_users.empty() ? nullptr : &cfg.eval_users;
    const std::size_t q_count = static_cast<std::size_t>(cfg.samples_per_iter);

    for (int t = state.iter + 1; t <= cfg.max_iters; ++t) {
        std::vector<WeightVector> samples(q_count);
        for (std::size_t i = 0; i < q_count; ++i) {
            RngStream rng(derive_seed(cfg.master_seed, kSampleTag,
                                      static_cast<std::uint64_t>(t), i));
            WeightVector w = dirichlet::sample(state.alpha, rng);
            if (cfg.bounds) {
                w = project_to_bounded_simplex(std::move(w.w), cfg.bounds->w_min,
                                               cfg.bounds->w_max);
            }
            samples[i] = std::move(w);
        }

        std::vector<double> scores(q_count);
        parallel_for(q_count, threads, [&](std::size_t i) {
            scores[i] = evaluate_objective(ds, samples[i], budget, cfg.metric, 1, subset);
        });

        double mean_score = 0.0;
        for (double s : scores) mean_score += s;
        mean_score /= static_cast<double>(q_count);

        const EliteSelection sel = select_elites(scores, cfg.elite_fraction);
        std::vector<WeightVector> elite_samples;
        elite_samples.reserve(sel.elite_idx.size());
        for (std::size_t i : sel.elite_idx) elite_samples.push_back(samples[i]);
        const auto mle = dirichlet::fit_mle(elite_samples);
        state.alpha = update_params(state.alpha, mle.params, state.eta1);
        state.gamma = sel.threshold;

        double iter_best = scores[0];
        for (double s : scores) iter_best = std::max(iter_best, s);

        // Patience and the eta decay key on strict improvement of the best
        // sample score.
        if (iter_best > state.best_score) {
            state.best_score = iter_best;
            state.no_improve_streak = 0;
        } else {
            state.no_improve_streak += 1;
            state.eta1 *= cfg.eta1_decay;
        }

        // The incumbent is the iterate whose mean weights actually evaluate
        // best: robust both to a lucky early sample pinning a still-diffuse
        // distribution and to drift after convergence.
        const double iterate_score = evaluate_objective(
            ds, dirichlet::mean_weights(state.alpha), budget, cfg.metric, threads, subset);
        if (iterate_score > state.best_alpha_score) {
            state.best_alpha_score = iterate_score;
            state.best_alpha = state.alpha;
        }

        state.iter = t;
        state.history.push_back(
            {t, mean_score, state.best_score, state.gamma, state.alpha.alpha});

        if (state.no_improve_streak >= cfg.patience) break;
    }

    CemResult result;
    result.weights = dirichlet::mean_weights(state.best_alpha);
    if (cfg.bounds) {
        result.weights = project_to_bounded_simplex(std::move(result.weights.w),
                                                    cfg.bounds->w_min, cfg.bounds->w_max);
    }
    result.state = std::move(state);
    return result;
}

CemResult run_cem(const Dataset& ds, const CemConfig& cfg, std::int32_t budget, int threads) {
    return run_cem(ds, cfg, budget, CemState{}, threads);
}

void save_checkpoint(const CemState& state, const std::string& path) {
    json j;
    j["iteration"] = state.iter;
    j["alpha"] = state.alpha.alpha;
    j["best_alpha"] = state.best_alpha.alpha;
    j["best_score"] = state.best_score;
    j["best_alpha_score"] = state.best_alpha_score;
    j["gamma"] = state.gamma;
    j["eta1"] = state.eta1;
    j["no_improve_streak"] = state.no_improve_streak;
    json hist = json::array();
    for (const auto& h : state.history) {
        hist.push_back({{"iter", h.iter},
                        {"mean_score", h.mean_score},
                        {"best_score", h.best_score},
                        {"gamma", h.gamma},
                        {"alpha", h.alpha}});
    }
    j["history"] = std::move(hist);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump(2) << '\n';
}

CemState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path, 0, std::string("invalid JSON: ") + e.what());
    }
    CemState state;
    state.iter = j.at("iteration").get<int>();
    state.alpha = dirichlet::DirichletParams::clamped(j.at("alpha").get<std::vector<double>>());
    state.best_alpha =
        dirichlet::DirichletParams::clamped(j.at("best_alpha").get<std::vector<double>>());
    state.best_score = j.at("best_score").get<double>();
    state.best_alpha_score = j.value("best_alpha_score",
                                     -std::numeric_limits<double>::infinity());
    state.gamma = j.at("gamma").get<double>();
    state.eta1 = j.at("eta1").get<double>();
    state.no_improve_streak = j.at("no_improve_streak").get<int>();
    for (const auto& h : j.at("history")) {
        state.history.push_back({h.at("iter").get<int>(), h.at("mean_score").get<double>(),
                                 h.at("best_score").get<double>(), h.at("gamma").get<double>(),
                                 h.at("alpha").get<std::vector<double>>()});
    }
    return state;
}

std::string history_csv(const CemState& state) {
    std::string out = "iter,mean_score,best_score,gamma\r\n";
    char buf[160];
    for (const auto& h : state.history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\r\n", h.iter, h.mean_score,
                      h.best_score, h.gamma);
        out += buf;
    }
    return out;
}

} // namespace fuse::cem
