#pragma once

#include <cstdint>
#include <vector>

#include "fuse/fusion.hpp"
#include "fuse/rng.hpp"

namespace fuse::dirichlet {

/// Strictly positive concentration vector. clamped() applies the optimizer
/// floor/ceiling ([kMinAlpha, kMaxAlpha]); the ceiling only matters for
/// degenerate MLE fits on zero-variance samples, which would otherwise
/// diverge. The policy head produces concentrations below the floor (its
/// positivity constant is 1e-6), so validate() demands positivity only.
struct DirichletParams {
    std::vector<double> alpha;

    static constexpr double kMinAlpha = 1e-3;
    static constexpr double kMaxAlpha = 1e8;

    std::size_t size() const { return alpha.size(); }

    static DirichletParams clamped(std::vector<double> raw);
    static DirichletParams ones(std::size_t k);
    void validate() const;
};

/// One draw via K independent Gamma(alpha_k, 1) variates normalized by their
/// sum. Deterministic given the stream.
WeightVector sample(const DirichletParams& params, RngStream& rng);

/// log f(w; alpha) with components clamped to >= 1e-12 before the log.
double log_pdf(const DirichletParams& params, const WeightVector& w);

/// Gradient of log_pdf in alpha: psi(sum alpha) - psi(alpha_i) + log w_i.
std::vector<double> log_pdf_grad_alpha(const DirichletParams& params, const WeightVector& w);

/// Distribution mean alpha / sum(alpha).
WeightVector mean_weights(const DirichletParams& params);

struct MleResult {
    DirichletParams params;
    bool converged = false;
    int iterations = 0;
};

/// Maximum-likelihood concentration from equally weighted samples:
/// moment-matching start, then the digamma fixed point on mean(log w).
/// Needs at least two samples. Non-convergence returns the last iterate
/// with converged == false.
MleResult fit_mle(const std::vector<WeightVector>& samples, int max_iters = 1000,
                  double tol = 1e-8);

} // namespace fuse::dirichlet
