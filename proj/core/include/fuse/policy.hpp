#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fuse/dataset.hpp"
#include "fuse/dirichlet.hpp"
#include "fuse/metrics.hpp"

namespace fuse::policy {

/// Policy input for one user: the user representation, the fixed per-channel
/// recall scores, and per-channel representations pooled from top-m items.
struct UserState {
    UserIndex user = -1;
    Eigen::VectorXd user_vec;        // d
    Eigen::VectorXd channel_recall;  // K
    Eigen::MatrixXd channel_vecs;    // K x d
};

/// AlphaGenerator weights: two linear+ReLU towers whose dot product scores
/// each channel, squashed to Dirichlet concentrations by a scaled tanh.
struct AlphaGeneratorParams {
    Eigen::MatrixXd w_user;  // h x d
    Eigen::VectorXd b_user;  // h
    Eigen::MatrixXd w_chan;  // h x d
    Eigen::VectorXd b_chan;  // h

    struct Hyper {
        double delta_max = 10.0;
        double epsilon = 1e-6;
        int hidden = 64;
        int dim = 32;
        int top_m = 10;
    } hyper;

    static AlphaGeneratorParams init(int dim, int hidden, double delta_max, double epsilon,
                                     int top_m, std::uint64_t seed);
    void validate() const;
};

/// Gradient (and momentum) buffers shaped like the parameters.
struct ParamGrads {
    Eigen::MatrixXd w_user, w_chan;
    Eigen::VectorXd b_user, b_chan;

    static ParamGrads zeros_like(const AlphaGeneratorParams& theta);
    void scale(double s);
    void add_scaled(const ParamGrads& other, double s);
    bool all_finite() const;
};

/// Assembles the state for one user: embedding lookup, mean-pooled top-m
/// channel item embeddings, per-channel recall against the dataset truth.
UserState build_user_state(const Dataset& ds, UserIndex user, int top_m);

/// alpha_u = ReLU(delta_max * tanh(h_u . h_ck + r_uk)) + epsilon, clamped to
/// [epsilon, delta_max + epsilon]. Throws on non-finite intermediates.
dirichlet::DirichletParams forward_alpha(const AlphaGeneratorParams& theta, const UserState& s);

/// log pi_theta(w | s): the Dirichlet log-density at w under forward_alpha.
double log_policy(const AlphaGeneratorParams& theta, const UserState& s, const WeightVector& w);

/// d log pi / d theta via the analytic chain through the tanh/ReLU head and
/// both towers. This is the score function that REINFORCE scales by
/// per-sample costs.
ParamGrads log_policy_grad(const AlphaGeneratorParams& theta, const UserState& s,
                           const WeightVector& w);

struct PgConfig {
    double eta2 = 1e-4;
    double momentum = 0.9;
    double lambda = 1.0;
    int samples_per_user = 1;  // S
    WeightVector w_global;     // stage-1 weights the regularizer pulls toward
    int batch_size = 64;
    int epochs = 20;
    bool baseline_enabled = true;  // batch-mean reward baseline
    std::uint64_t master_seed = 0;
    int top_m = 10;
    Metric reward_metric = Metric::recall;
    int hidden = 64;
    double delta_max = 10.0;
    double epsilon = 1e-6;

    void validate(std::size_t n_channels) const;
};

struct StepStats {
    double loss = 0.0;
    double mean_reward = 0.0;
};

struct PgOptState {
    ParamGrads velocity;
};

/// One REINFORCE update: per user, sample S weight vectors from
/// Dirichlet(alpha_u), reward each merged set, then descend
/// mean[(-(R - baseline) + lambda * ||w - w_global||^2) * grad log pi]
/// with momentum. Throws if the gradient goes non-finite.
StepStats policy_grad_step(AlphaGeneratorParams& theta, PgOptState& opt,
                           const std::vector<const UserState*>& batch, const PgConfig& cfg,
                           const Dataset& ds, std::int32_t budget, std::uint64_t step_seed,
                           int threads = 1);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_reward = 0.0;
    double validation_score = 0.0;
};

/// Epochs of shuffled minibatch REINFORCE over users with ground truth;
/// returns the parameters with the best validation mean recall (the initial
/// parameters compete too).
AlphaGeneratorParams train_pg(const Dataset& ds, const PgConfig& cfg, std::int32_t budget,
                              int threads = 1, const Dataset* validation = nullptr,
                              std::vector<EpochStats>* log = nullptr);

/// Deterministic per-user weights: the Dirichlet mean of forward_alpha.
PersonalizedWeights infer_weights(const AlphaGeneratorParams& theta, const Dataset& ds,
                                  int threads = 1);

void save_params(const AlphaGeneratorParams& theta, const std::string& path);
AlphaGeneratorParams load_params(const std::string& path);

} // namespace fuse::policy
