#include "fuse/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fuse/parallel.hpp"
#include "fuse/rng.hpp"

using nlohmann::json;

namespace fuse::policy {

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, double scale,
                              std::uint64_t seed) {
    RngStream rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = rng.uniform(-scale, scale);
        }
    }
    return m;
}

void check_finite(const Eigen::VectorXd& v, const char* layer) {
    if (!v.allFinite()) {
        throw std::runtime_error(std::string("AlphaGenerator produced a non-finite value in ") +
                                 layer);
    }
}

} // namespace

AlphaGeneratorParams AlphaGeneratorParams::init(int dim, int hidden, double delta_max,
                                                double epsilon, int top_m, std::uint64_t seed) {
    if (dim < 1 || hidden < 1) throw ValidationError("dim and hidden size must be positive");
    if (!(delta_max > 0.0) || !(epsilon > 0.0)) {
        throw ValidationError("delta_max and epsilon must be positive");
    }
    AlphaGeneratorParams theta;
    // Small init keeps the preference scores v_uk below the recall scores at
    // the start, so the tanh head stays in its linear region instead of
    // saturating (the towers multiply, so variance compounds as dim*hidden).
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim) * hidden);
    theta.w_user = random_matrix(hidden, dim, scale, derive_seed(seed, 0x57A7Eu, 0));
    theta.w_chan = random_matrix(hidden, dim, scale, derive_seed(seed, 0x57A7Eu, 1));
    theta.b_user = Eigen::VectorXd::Zero(hidden);
    theta.b_chan = Eigen::VectorXd::Zero(hidden);
    theta.hyper = {delta_max, epsilon, hidden, dim, top_m};
    return theta;
}

void AlphaGeneratorParams::validate() const {
    if (!(hyper.delta_max > 0.0) || !(hyper.epsilon > 0.0)) {
        throw ValidationError("delta_max and epsilon must be positive");
    }
    if (w_user.rows() != hyper.hidden || w_user.cols() != hyper.dim ||
        w_chan.rows() != hyper.hidden || w_chan.cols() != hyper.dim ||
        b_user.size() != hyper.hidden || b_chan.size() != hyper.hidden) {
        throw ValidationError("AlphaGenerator parameter shapes are inconsistent");
    }
}

ParamGrads ParamGrads::zeros_like(const AlphaGeneratorParams& theta) {
    ParamGrads g;
    g.w_user = Eigen::MatrixXd::Zero(theta.w_user.rows(), theta.w_user.cols());
    g.w_chan = Eigen::MatrixXd::Zero(theta.w_chan.rows(), theta.w_chan.cols());
    g.b_user = Eigen::VectorXd::Zero(theta.b_user.size());
    g.b_chan = Eigen::VectorXd::Zero(theta.b_chan.size());
    return g;
}

void ParamGrads::scale(double s) {
    w_user *= s;
    w_chan *= s;
    b_user *= s;
    b_chan *= s;
}

void ParamGrads::add_scaled(const ParamGrads& other, double s) {
    w_user += s * other.w_user;
    w_chan += s * other.w_chan;
    b_user += s * other.b_user;
    b_chan += s * other.b_chan;
}

bool ParamGrads::all_finite() const {
    return w_user.allFinite() && w_chan.allFinite() && b_user.allFinite() && b_chan.allFinite();
}

UserState build_user_state(const Dataset& ds, UserIndex user, int top_m) {
    if (!ds.embeddings) throw ValidationError("dataset has no embeddings");
    if (user < 0 || static_cast<std::size_t>(user) >= ds.num_users()) {
        throw ValidationError("unknown user index " + std::to_string(user));
    }
    if (top_m < 1) throw ValidationError("top_m must be >= 1");
    const std::size_t u = static_cast<std::size_t>(user);
    const auto& emb = *ds.embeddings;
    const auto& uvec = emb.user_vecs[u];
    if (uvec.empty()) {
        throw ValidationError("missing user embedding for \"" + ds.users[u] + "\"");
    }

    UserState s;
    s.user = user;
    s.user_vec = Eigen::Map<const Eigen::VectorXd>(uvec.data(), static_cast<Eigen::Index>(uvec.size()));

    const std::size_t k_channels = ds.num_channels();
    s.channel_vecs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k_channels), emb.dim);
    s.channel_recall = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_channels));

    const auto& rel = ds.truth.relevant[u];
    for (std::size_t k = 0; k < k_channels; ++k) {
        const auto& list = ds.channels[k].lists[u];
        if (static_cast<int>(list.size()) < top_m) {
            throw ValidationError("channel \"" + ds.channels[k].channel_name + "\" has fewer than " +
                                  std::to_string(top_m) + " items for user \"" + ds.users[u] + "\"");
        }
        Eigen::VectorXd pooled = Eigen::VectorXd::Zero(emb.dim);
        for (int r = 0; r < top_m; ++r) {
            const ItemIndex item = list[static_cast<std::size_t>(r)];
            const auto& ivec = emb.item_vecs[static_cast<std::size_t>(item)];
            if (ivec.empty()) {
                throw ValidationError("missing item embedding for \"" +
                                      ds.items[static_cast<std::size_t>(item)] + "\"");
            }
            pooled += Eigen::Map<const Eigen::VectorXd>(ivec.data(),
                                                        static_cast<Eigen::Index>(ivec.size()));
        }
        s.channel_vecs.row(static_cast<Eigen::Index>(k)) = pooled / static_cast<double>(top_m);

        if (!rel.empty()) {
            std::size_t hits = 0;
            for (ItemIndex item : list) {
                hits += std::binary_search(rel.begin(), rel.end(), item);
            }
            s.channel_recall[static_cast<Eigen::Index>(k)] =
                static_cast<double>(hits) / static_cast<double>(rel.size());
        }
    }
    return s;
}

namespace {

/// Shared forward pass capturing every intermediate the gradient needs.
struct ForwardTrace {
    Eigen::VectorXd z_user, h_user;       // h
    Eigen::MatrixXd z_chan, h_chan;       // K x h
    Eigen::VectorXd scores, combined;     // K: v_uk and e_uk
    Eigen::VectorXd tanh_e;               // K
    Eigen::VectorXd alpha;                // K
};

ForwardTrace forward_trace(const AlphaGeneratorParams& theta, const UserState& s) {
    theta.validate();
    if (s.user_vec.size() != theta.hyper.dim) {
        throw ValidationError("user embedding dimension does not match the policy");
    }
    if (s.channel_vecs.cols() != theta.hyper.dim ||
        s.channel_vecs.rows() != s.channel_recall.size()) {
        throw ValidationError("channel representation shapes are inconsistent");
    }
    const Eigen::Index k_channels = s.channel_recall.size();
    const double delta = theta.hyper.delta_max;
    const double eps = theta.hyper.epsilon;

    ForwardTrace t;
    t.z_user = theta.w_user * s.user_vec + theta.b_user;
    check_finite(t.z_user, "user tower");
    t.h_user = t.z_user.cwiseMax(0.0);

    t.z_chan.resize(k_channels, theta.hyper.hidden);
    t.h_chan.resize(k_channels, theta.hyper.hidden);
    t.scores.resize(k_channels);
    for (Eigen::Index k = 0; k < k_channels; ++k) {
        Eigen::VectorXd z = theta.w_chan * s.channel_vecs.row(k).transpose() + theta.b_chan;
        check_finite(z, "channel tower");
        t.z_chan.row(k) = z;
        t.h_chan.row(k) = z.cwiseMax(0.0);
        t.scores[k] = t.h_user.dot(t.h_chan.row(k));
    }
    check_finite(t.scores, "preference scores");
    t.combined = t.scores + s.channel_recall;
    t.tanh_e = t.combined.array().tanh();
    t.alpha.resize(k_channels);
    for (Eigen::Index k = 0; k < k_channels; ++k) {
        const double pre = delta * t.tanh_e[k];
        t.alpha[k] = std::clamp(std::max(pre, 0.0) + eps, eps, delta + eps);
    }
    check_finite(t.alpha, "concentration head");
    return t;
}

} // namespace

dirichlet::DirichletParams forward_alpha(const AlphaGeneratorParams& theta, const UserState& s) {
    const ForwardTrace t = forward_trace(theta, s);
    dirichlet::DirichletParams params;
    params.alpha.assign(t.alpha.data(), t.alpha.data() + t.alpha.size());
    return params;
}

double log_policy(const AlphaGeneratorParams& theta, const UserState& s, const WeightVector& w) {
    return dirichlet::log_pdf(forward_alpha(theta, s), w);
}

ParamGrads log_policy_grad(const AlphaGeneratorParams& theta, const UserState& s,
                           const WeightVector& w) {
    const ForwardTrace t = forward_trace(theta, s);
    const Eigen::Index k_channels = s.channel_recall.size();
    const double delta = theta.hyper.delta_max;

    dirichlet::DirichletParams params;
    params.alpha.assign(t.alpha.data(), t.alpha.data() + t.alpha.size());
    const std::vector<double> dlog_dalpha = dirichlet::log_pdf_grad_alpha(params, w);

    // d alpha_k / d e_k: scaled tanh derivative gated by the ReLU
    // (subgradient 0 at 0).
    Eigen::VectorXd head(k_channels);
    for (Eigen::Index k = 0; k < k_channels; ++k) {
        const double pre = delta * t.tanh_e[k];
        head[k] = pre > 0.0
                      ? dlog_dalpha[static_cast<std::size_t>(k)] * delta *
                            (1.0 - t.tanh_e[k] * t.tanh_e[k])
                      : 0.0;
    }

    const Eigen::VectorXd user_mask =
        (t.z_user.array() > 0.0).cast<double>().matrix();

    ParamGrads g = ParamGrads::zeros_like(theta);
    Eigen::VectorXd dz_user = Eigen::VectorXd::Zero(theta.hyper.hidden);
    for (Eigen::Index k = 0; k < k_channels; ++k) {
        if (head[k] == 0.0) continue;
        // v_k = h_user . h_chan_k
        dz_user += head[k] * (t.h_chan.row(k).transpose().cwiseProduct(user_mask));
        const Eigen::VectorXd chan_mask =
            (t.z_chan.row(k).transpose().array() > 0.0).cast<double>().matrix();
        const Eigen::VectorXd dz_chan = head[k] * t.h_user.cwiseProduct(chan_mask);
        g.w_chan.noalias() += dz_chan * s.channel_vecs.row(k);
        g.b_chan += dz_chan;
    }
    g.w_user.noalias() = dz_user * s.user_vec.transpose();
    g.b_user = dz_user;
    return g;
}

void PgConfig::validate(std::size_t n_channels) const {
    if (!(eta2 > 0.0)) throw ValidationError("eta2 must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
    if (lambda < 0.0) throw ValidationError("lambda must be non-negative");
    if (samples_per_user < 1) throw ValidationError("samples per user must be >= 1");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (top_m < 1) throw ValidationError("top_m must be >= 1");
    if (hidden < 1) throw ValidationError("hidden size must be >= 1");
    if (!(delta_max > 0.0) || !(epsilon > 0.0)) {
        throw ValidationError("delta_max and epsilon must be positive");
    }
    if (!w_global.w.empty()) {
        w_global.validate();
        if (w_global.size() != n_channels) {
            throw ValidationError("w_global dimension does not match channel count");
        }
    } else if (lambda > 0.0) {
        throw ValidationError("lambda > 0 requires w_global");
    }
}

StepStats policy_grad_step(AlphaGeneratorParams& theta, PgOptState& opt,
                           const std::vector<const UserState*>& batch, const PgConfig& cfg,
                           const Dataset& ds, std::int32_t budget, std::uint64_t step_seed,
                           int threads) {
    cfg.validate(ds.num_channels());
    if (batch.empty()) throw ValidationError("empty policy-gradient batch");
    const std::size_t n_batch = batch.size();
    const std::size_t n_samples = static_cast<std::size_t>(cfg.samples_per_user);
    const double denom = static_cast<double>(n_batch * n_samples);

    struct Draw {
        WeightVector w;
        double reward = 0.0;
        double penalty = 0.0;
    };
    std::vector<std::vector<Draw>> draws(n_batch);

    parallel_for(n_batch, threads, [&, scratch = MergeScratch{}](std::size_t b) mutable {
        const UserState& s = *batch[b];
        const auto alpha = forward_alpha(theta, s);
        auto& slot = draws[b];
        slot.resize(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) {
            RngStream rng(derive_seed(step_seed, 0x90A1u, b, i));
            Draw d;
            d.w = dirichlet::sample(alpha, rng);
            const MergedSet merged = merge_user(ds, s.user, d.w, budget, scratch);
            d.reward = evaluate_user(merged, ds.truth).get(cfg.reward_metric);
            if (cfg.lambda > 0.0) {
                double p = 0.0;
                for (std::size_t k = 0; k < d.w.size(); ++k) {
                    const double diff = d.w[k] - cfg.w_global[k];
                    p += diff * diff;
                }
                d.penalty = p;
            }
            slot[i] = std::move(d);
        }
    });

    double reward_sum = 0.0, penalty_sum = 0.0;
    for (const auto& slot : draws) {
        for (const auto& d : slot) {
            reward_sum += d.reward;
            penalty_sum += d.penalty;
        }
    }
    const double mean_reward = reward_sum / denom;
    const double mean_penalty = penalty_sum / denom;
    // The batch-mean baseline centers both cost terms; E[grad log pi] = 0
    // keeps the estimator unbiased either way, centering only cuts variance.
    const double reward_base = cfg.baseline_enabled ? mean_reward : 0.0;
    const double penalty_base = cfg.baseline_enabled ? mean_penalty : 0.0;
    const double loss = -mean_reward + cfg.lambda * mean_penalty;

    std::vector<ParamGrads> per_user(n_batch);
    parallel_for(n_batch, threads, [&](std::size_t b) {
        const UserState& s = *batch[b];
        ParamGrads acc = ParamGrads::zeros_like(theta);
        for (const auto& d : draws[b]) {
            const double coef =
                (-(d.reward - reward_base) + cfg.lambda * (d.penalty - penalty_base)) / denom;
            if (coef == 0.0) continue;
            acc.add_scaled(log_policy_grad(theta, s, d.w), coef);
        }
        per_user[b] = std::move(acc);
    });

    ParamGrads grad = ParamGrads::zeros_like(theta);
    for (const auto& g : per_user) grad.add_scaled(g, 1.0);
    if (!grad.all_finite()) {
        throw std::runtime_error("policy gradient is not finite; step aborted");
    }

    if (opt.velocity.w_user.size() == 0) opt.velocity = ParamGrads::zeros_like(theta);
    opt.velocity.scale(cfg.momentum);
    opt.velocity.add_scaled(grad, 1.0);
    theta.w_user -= cfg.eta2 * opt.velocity.w_user;
    theta.w_chan -= cfg.eta2 * opt.velocity.w_chan;
    theta.b_user -= cfg.eta2 * opt.velocity.b_user;
    theta.b_chan -= cfg.eta2 * opt.velocity.b_chan;

    return {loss, mean_reward};
}

AlphaGeneratorParams train_pg(const Dataset& ds, const PgConfig& cfg, std::int32_t budget,
                              int threads, const Dataset* validation,
                              std::vector<EpochStats>* log) {
    cfg.validate(ds.num_channels());
    if (!ds.embeddings) throw ValidationError("policy training requires embeddings");
    const Dataset& val = validation ? *validation : ds;

    std::vector<UserIndex> trainable;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        if (!ds.truth.relevant[u].empty()) trainable.push_back(static_cast<UserIndex>(u));
    }
    if (trainable.empty()) throw ValidationError("no users with ground truth to train on");

    std::vector<UserState> states(trainable.size());
    parallel_for(trainable.size(), threads, [&](std::size_t i) {
        states[i] = build_user_state(ds, trainable[i], cfg.top_m);
    });

    AlphaGeneratorParams theta =
        AlphaGeneratorParams::init(ds.embeddings->dim, cfg.hidden, cfg.delta_max, cfg.epsilon,
                                   cfg.top_m, derive_seed(cfg.master_seed, 0x1A17u));
    PgOptState opt;

    auto validation_recall = [&](const AlphaGeneratorParams& params) {
        return evaluate_objective(val, infer_weights(params, val, threads), budget,
                                  Metric::recall, threads);
    };

    AlphaGeneratorParams best = theta;
    double best_score = validation_recall(theta);

    std::vector<std::size_t> order(states.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RngStream shuffle_rng(derive_seed(cfg.master_seed, 0x5FFEu, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0, reward_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<const UserState*> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&states[order[i]]);
            const std::uint64_t step_seed =
                derive_seed(cfg.master_seed, 0x57E9u, static_cast<std::uint64_t>(epoch), n_batches);
            const StepStats stats =
                policy_grad_step(theta, opt, batch, cfg, ds, budget, step_seed, threads);
            loss_sum += stats.loss;
            reward_sum += stats.mean_reward;
            ++n_batches;
        }

        const double score = validation_recall(theta);
        if (score > best_score) {
            best_score = score;
            best = theta;
        }
        if (log) {
            log->push_back({epoch, loss_sum / static_cast<double>(n_batches),
                            reward_sum / static_cast<double>(n_batches), score});
        }
    }
    return best;
}

PersonalizedWeights infer_weights(const AlphaGeneratorParams& theta, const Dataset& ds,
                                  int threads) {
    theta.validate();
    PersonalizedWeights pw;
    pw.per_user.resize(ds.num_users());
    parallel_for(ds.num_users(), threads, [&](std::size_t u) {
        const UserState s = build_user_state(ds, static_cast<UserIndex>(u), theta.hyper.top_m);
        pw.per_user[u] = dirichlet::mean_weights(forward_alpha(theta, s));
    });
    return pw;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

} // namespace

void save_params(const AlphaGeneratorParams& theta, const std::string& path) {
    theta.validate();
    json j;
    j["W_u"] = matrix_to_json(theta.w_user);
    j["b_u"] = std::vector<double>(theta.b_user.data(), theta.b_user.data() + theta.b_user.size());
    j["W_c"] = matrix_to_json(theta.w_chan);
    j["b_c"] = std::vector<double>(theta.b_chan.data(), theta.b_chan.data() + theta.b_chan.size());
    j["hyper"] = {{"delta_max", theta.hyper.delta_max},
                  {"epsilon", theta.hyper.epsilon},
                  {"hidden", theta.hyper.hidden},
                  {"dim", theta.hyper.dim},
                  {"top_m", theta.hyper.top_m}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write policy checkpoint: " + path);
    out << j.dump(2) << '\n';
}

AlphaGeneratorParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open policy checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path, 0, std::string("invalid JSON: ") + e.what());
    }
    AlphaGeneratorParams theta;
    theta.w_user = matrix_from_json(j.at("W_u"));
    theta.w_chan = matrix_from_json(j.at("W_c"));
    const auto bu = j.at("b_u").get<std::vector<double>>();
    const auto bc = j.at("b_c").get<std::vector<double>>();
    theta.b_user = Eigen::Map<const Eigen::VectorXd>(bu.data(), static_cast<Eigen::Index>(bu.size()));
    theta.b_chan = Eigen::Map<const Eigen::VectorXd>(bc.data(), static_cast<Eigen::Index>(bc.size()));
    const auto& h = j.at("hyper");
    theta.hyper.delta_max = h.at("delta_max").get<double>();
    theta.hyper.epsilon = h.at("epsilon").get<double>();
    theta.hyper.hidden = h.at("hidden").get<int>();
    theta.hyper.dim = h.at("dim").get<int>();
    theta.hyper.top_m = h.at("top_m").get<int>();
    theta.validate();
    return theta;
}

} // namespace fuse::policy
