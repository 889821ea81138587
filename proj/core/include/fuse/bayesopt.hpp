#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fuse/dataset.hpp"
#include "fuse/dirichlet.hpp"
#include "fuse/metrics.hpp"

namespace fuse::bayesopt {

/// Gaussian-process surrogate: Matern-5/2 kernel with per-dimension length
/// scales over inputs normalized to the unit box, targets standardized.
struct GpModel {
    Eigen::MatrixXd train_x;  // n x dim, normalized
    Eigen::VectorXd train_y;  // n, standardized
    Eigen::VectorXd length_scales;
    double signal_var = 1.0;
    double jitter = 1e-6;
    Eigen::MatrixXd chol_lower;   // L with L L^T = K + jitter I
    Eigen::VectorXd gram_weights; // (K + jitter I)^-1 y
    bool fitted = false;
};

/// Fits the GP: length scales from the per-dimension median heuristic on
/// pairwise distances, unit signal variance, Cholesky of the Gram matrix.
/// An empty training set yields the prior.
GpModel fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double jitter = 1e-6);

/// Posterior (mean, variance) at a normalized input; variance clamped at 0.
/// Throws on an unfitted model.
std::pair<double, double> gp_posterior(const GpModel& model, const Eigen::VectorXd& x);

/// Expected improvement over s_best for a maximization objective; the
/// degenerate sigma = 0 case returns max(mu - s_best, 0).
double expected_improvement(double mu, double sigma, double s_best);

struct BoConfig {
    int iterations = 10;  // T
    int n_init = 5;       // initial design size, CEM point included
    int n_candidates = 2048;
    /// Search box; when empty it defaults to [0.5, 1.5] * alpha_cem.
    std::vector<double> box_lo, box_hi;
    Metric metric = Metric::recall;
    std::uint64_t master_seed = 0;
    std::vector<UserIndex> eval_users;  // fixed subsample; empty = all

    void validate() const;
};

struct BoObservation {
    std::vector<double> beta;
    double score = 0.0;
    std::optional<double> ei;  // acquisition value at selection; design points carry none
};

struct BoResult {
    dirichlet::DirichletParams beta;
    WeightVector weights;
    double best_score = 0.0;
    std::vector<BoObservation> trace;
};

/// Stage-2 refinement around the CEM concentration: initial design of the
/// CEM point plus uniform box samples, then T rounds of fit-GP / random
/// search EI / evaluate. Returns the best-scoring concentration observed
/// (the CEM point is in the design, so the result never regresses). A zero
/// iteration budget returns alpha_cem untouched.
BoResult run_bayesopt(const Dataset& ds, const dirichlet::DirichletParams& alpha_cem,
                      const BoConfig& cfg, std::int32_t budget, int threads = 1);

} // namespace fuse::bayesopt
