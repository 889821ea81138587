#include "fuse/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fuse/parallel.hpp"
#include "fuse/rng.hpp"
#include "fuse/special.hpp"

namespace fuse::bayesopt {

namespace {

double matern52(double r) {
    const double a = std::sqrt(5.0) * r;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
}

double scaled_distance(const GpModel& model, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
        const double diff = (a[d] - b[d]) / model.length_scales[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

} // namespace

GpModel fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double jitter) {
    if (x.rows() != y.size()) throw ValidationError("GP training inputs/targets mismatch");
    GpModel model;
    model.train_x = x;
    model.train_y = y;
    model.jitter = std::max(jitter, 1e-6);
    model.signal_var = 1.0;

    const Eigen::Index n = x.rows();
    const Eigen::Index dim = x.cols();
    model.length_scales = Eigen::VectorXd::Ones(dim);

    // Per-dimension median heuristic on pairwise absolute differences.
    if (n >= 2) {
        std::vector<double> diffs;
        diffs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
        for (Eigen::Index d = 0; d < dim; ++d) {
            diffs.clear();
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = i + 1; j < n; ++j) {
                    diffs.push_back(std::abs(x(i, d) - x(j, d)));
                }
            }
            std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
            const double med = diffs[diffs.size() / 2];
            model.length_scales[d] = med > 1e-9 ? std::max(med, 1e-3) : 1.0;
        }
    }

    if (n > 0) {
        Eigen::MatrixXd gram(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            gram(i, i) = model.signal_var + model.jitter;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double k =
                    model.signal_var * matern52(scaled_distance(model, x.row(i), x.row(j)));
                gram(i, j) = k;
                gram(j, i) = k;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("GP Gram matrix is not positive definite");
        }
        model.chol_lower = llt.matrixL();
        model.gram_weights = llt.solve(y);
    }
    model.fitted = true;
    return model;
}

std::pair<double, double> gp_posterior(const GpModel& model, const Eigen::VectorXd& x) {
    if (!model.fitted) throw ValidationError("GP model is not fitted");
    const Eigen::Index n = model.train_x.rows();
    if (n == 0) return {0.0, model.signal_var};
    if (x.size() != model.train_x.cols()) throw ValidationError("GP query dimension mismatch");

    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k_star[i] = model.signal_var * matern52(scaled_distance(model, x, model.train_x.row(i)));
    }
    const double mu = k_star.dot(model.gram_weights);
    const Eigen::VectorXd v =
        model.chol_lower.triangularView<Eigen::Lower>().solve(k_star);
    const double var = std::max(model.signal_var - v.squaredNorm(), 0.0);
    return {mu, var};
}

double expected_improvement(double mu, double sigma, double s_best) {
    if (sigma < 0.0) throw ValidationError("sigma must be non-negative");
    const double diff = mu - s_best;
    if (sigma == 0.0) return std::max(diff, 0.0);
    const double z = diff / sigma;
    return std::max(diff * norm_cdf(z) + sigma * norm_pdf(z), 0.0);
}

void BoConfig::validate() const {
    if (iterations < 0) throw ValidationError("BayesOpt iteration budget must be >= 0");
    if (n_init < 1) throw ValidationError("initial design needs at least 1 point");
    if (n_candidates < 1) throw ValidationError("acquisition needs at least 1 candidate");
    if (box_lo.size() != box_hi.size()) throw ValidationError("box bounds dimension mismatch");
    for (std::size_t i = 0; i < box_lo.size(); ++i) {
        if (!(box_lo[i] < box_hi[i])) {
            throw ValidationError("box bounds must satisfy lo < hi componentwise");
        }
    }
}

BoResult run_bayesopt(const Dataset& ds, const dirichlet::DirichletParams& alpha_cem,
                      const BoConfig& cfg, std::int32_t budget, int threads) {
    alpha_cem.validate();
    cfg.validate();
    const std::size_t dim = alpha_cem.size();
    if (dim != ds.num_channels()) {
        throw ValidationError("concentration dimension does not match channel count");
    }

    BoResult result;
    if (cfg.iterations == 0) {
        result.beta = alpha_cem;
        result.weights = dirichlet::mean_weights(alpha_cem);
        result.best_score = std::numeric_limits<double>::quiet_NaN();
        return result;
    }

    // Search box [0.5, 1.5] * alpha_cem unless configured; the lower edge is
    // kept at the concentration floor.
    std::vector<double> lo = cfg.box_lo, hi = cfg.box_hi;
    if (lo.empty()) {
        lo.resize(dim);
        hi.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            lo[i] = std::max(0.5 * alpha_cem.alpha[i], dirichlet::DirichletParams::kMinAlpha);
            hi[i] = std::max(1.5 * alpha_cem.alpha[i], lo[i] + 1e-3);
        }
    } else if (lo.size() != dim) {
        throw ValidationError("box bounds dimension does not match channel count");
    }

    const std::vector<UserIndex>* subset = cfg.eval_users.empty() ? nullptr : &cfg.eval_users;
    auto score_of = [&](const std::vector<double>& beta) {
        const auto params = dirichlet::DirichletParams::clamped(beta);
        return evaluate_objective(ds, dirichlet::mean_weights(params), budget, cfg.metric,
                                  threads, subset);
    };
    auto normalize = [&](const std::vector<double>& beta) {
        Eigen::VectorXd x(dim);
        for (std::size_t i = 0; i < dim; ++i) x[static_cast<Eigen::Index>(i)] = (beta[i] - lo[i]) / (hi[i] - lo[i]);
        return x;
    };

    // Initial design: the CEM point plus uniform box samples.
    std::vector<std::vector<double>> observed_x;
    std::vector<double> observed_y;
    observed_x.push_back(alpha_cem.alpha);
    for (int i = 1; i < cfg.n_init; ++i) {
        RngStream rng(derive_seed(cfg.master_seed, 0xB0DEu, 1, static_cast<std::uint64_t>(i)));
        std::vector<double> beta(dim);
        for (std::size_t d = 0; d < dim; ++d) beta[d] = rng.uniform(lo[d], hi[d]);
        observed_x.push_back(std::move(beta));
    }
    for (const auto& beta : observed_x) {
        observed_y.push_back(score_of(beta));
        result.trace.push_back({beta, observed_y.back(), std::nullopt});
    }

    for (int t = 1; t <= cfg.iterations; ++t) {
        const std::size_t n = observed_x.size();
        double y_mean = 0.0;
        for (double y : observed_y) y_mean += y;
        y_mean /= static_cast<double>(n);
        double y_var = 0.0;
        for (double y : observed_y) y_var += (y - y_mean) * (y - y_mean);
        const double y_std = std::sqrt(y_var / static_cast<double>(n));
        const double scale = y_std > 1e-12 ? y_std : 1.0;

        Eigen::MatrixXd x_mat(n, dim);
        Eigen::VectorXd y_vec(n);
        for (std::size_t i = 0; i < n; ++i) {
            x_mat.row(static_cast<Eigen::Index>(i)) = normalize(observed_x[i]);
            y_vec[static_cast<Eigen::Index>(i)] = (observed_y[i] - y_mean) / scale;
        }
        const GpModel model = fit_gp(x_mat, y_vec);
        const double s_best = y_vec.maxCoeff();

        const std::size_t n_cand = static_cast<std::size_t>(cfg.n_candidates);
        std::vector<std::vector<double>> candidates(n_cand);
        std::vector<double> acq(n_cand);
        parallel_for(n_cand, threads, [&](std::size_t j) {
            RngStream rng(derive_seed(cfg.master_seed, 0xCAFDu, static_cast<std::uint64_t>(t), j));
            std::vector<double> beta(dim);
            for (std::size_t d = 0; d < dim; ++d) beta[d] = rng.uniform(lo[d], hi[d]);
            const auto [mu, var] = gp_posterior(model, normalize(beta));
            acq[j] = expected_improvement(mu, std::sqrt(var), s_best);
            candidates[j] = std::move(beta);
        });
        std::size_t pick = 0;
        for (std::size_t j = 1; j < n_cand; ++j) {
            if (acq[j] > acq[pick]) pick = j;
        }

        observed_x.push_back(candidates[pick]);
        observed_y.push_back(score_of(candidates[pick]));
        result.trace.push_back({candidates[pick], observed_y.back(), acq[pick]});
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < observed_y.size(); ++i) {
        if (observed_y[i] > observed_y[best]) best = i;
    }
    result.beta = dirichlet::DirichletParams::clamped(observed_x[best]);
    result.weights = dirichlet::mean_weights(result.beta);
    result.best_score = observed_y[best];
    return result;
}

} // namespace fuse::bayesopt
