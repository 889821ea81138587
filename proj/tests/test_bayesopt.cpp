#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "fuse/bayesopt.hpp"
#include "fuse/cem.hpp"
#include "fuse/synth.hpp"

using namespace fuse;
using namespace fuse::bayesopt;

namespace {

dirichlet::DirichletParams params(std::vector<double> a) {
    dirichlet::DirichletParams p;
    p.alpha = std::move(a);
    return p;
}

Dataset tilted_fixture(std::uint64_t seed) {
    synth::SyntheticSpec spec;
    spec.n_users = 20;
    spec.n_items = 260;
    spec.n_channels = 3;
    spec.depth = 16;
    spec.truth_size = 12;
    spec.dim = 8;
    spec.channels = {{"a", 0.8, std::nullopt, 0.0},
                     {"b", 0.3, std::nullopt, 0.0},
                     {"c", 0.1, std::nullopt, 0.0}};
    spec.master_seed = seed;
    return synth::generate_benchmark(spec);
}

} // namespace

TEST_SUITE("bayesopt") {

TEST_CASE("expected improvement closed forms") {
    CHECK(expected_improvement(0.3, 0.0, 0.5) == 0.0);
    CHECK(expected_improvement(0.5, 0.0, 0.5) == 0.0);
    CHECK(expected_improvement(0.7, 0.0, 0.5) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(expected_improvement(0.5, 1.0, 0.5) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK_THROWS_AS(expected_improvement(0.0, -1.0, 0.0), ValidationError);
}

TEST_CASE("expected improvement is non-negative and vanishes in the no-hope limit") {
    RngStream rng(101);
    for (int i = 0; i < 500; ++i) {
        const double mu = rng.uniform(-2.0, 2.0);
        const double sigma = rng.uniform(0.0, 2.0);
        const double best = rng.uniform(-2.0, 2.0);
        CHECK(expected_improvement(mu, sigma, best) >= 0.0);
    }
    // sigma -> 0 with mu below the incumbent
    for (double sigma : {1e-2, 1e-4, 1e-8}) {
        CHECK(expected_improvement(0.0, sigma, 0.5) < expected_improvement(0.0, 1.0, 0.5));
    }
    CHECK(expected_improvement(0.0, 1e-12, 0.5) <= 1e-12);
}

TEST_CASE("gp posterior basics") {
    SUBCASE("unfitted model errors") {
        GpModel model;
        CHECK_THROWS_AS(gp_posterior(model, Eigen::VectorXd::Zero(2)), ValidationError);
    }
    SUBCASE("empty training set returns the prior") {
        const auto model = fit_gp(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0));
        const auto [mu, var] = gp_posterior(model, Eigen::VectorXd::Zero(2));
        CHECK(mu == 0.0);
        CHECK(var == doctest::Approx(model.signal_var));
    }
    SUBCASE("interpolates training points") {
        Eigen::MatrixXd x(4, 2);
        x << 0.1, 0.2, 0.8, 0.3, 0.4, 0.9, 0.6, 0.6;
        Eigen::VectorXd y(4);
        y << -1.0, 0.5, 1.2, -0.7;
        const auto model = fit_gp(x, y);
        for (int i = 0; i < 4; ++i) {
            const auto [mu, var] = gp_posterior(model, x.row(i));
            CHECK(std::abs(mu - y[i]) < 1e-3);
            CHECK(var <= 1e-3);
            CHECK(std::abs(mu - y[i]) < 10.0 * model.jitter * 10.0);
        }
    }
    SUBCASE("midpoint of two symmetric points averages them") {
        Eigen::MatrixXd x(2, 1);
        x << 0.2, 0.8;
        Eigen::VectorXd y(2);
        y << -1.0, 1.0;
        const auto model = fit_gp(x, y);
        Eigen::VectorXd mid(1);
        mid << 0.5;
        const auto [mu, var] = gp_posterior(model, mid);
        CHECK(mu == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var >= 0.0);
    }
}

TEST_CASE("zero iteration budget returns the CEM point untouched") {
    const auto ds = tilted_fixture(3);
    BoConfig cfg;
    cfg.iterations = 0;
    const auto start = params({2.0, 1.0, 0.5});
    const auto result = run_bayesopt(ds, start, cfg, 12);
    CHECK(result.beta.alpha == start.alpha);
    CHECK(result.weights.w == dirichlet::mean_weights(start).w);
    CHECK(result.trace.empty());
}

TEST_CASE("refinement never falls below the CEM incumbent") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto ds = tilted_fixture(100 + seed);
        const auto start = params({1.5, 1.0, 0.8});
        const double incumbent =
            evaluate_objective(ds, dirichlet::mean_weights(start), 12, Metric::recall);
        BoConfig cfg;
        cfg.iterations = 5;
        cfg.n_candidates = 256;
        cfg.master_seed = seed;
        const auto result = run_bayesopt(ds, start, cfg, 12);
        CHECK(result.best_score >= incumbent);
    }
}

TEST_CASE("returned concentration stays inside the search box") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ds = tilted_fixture(200 + seed);
        const auto start = params({1.2, 0.9, 1.7});
        BoConfig cfg;
        cfg.iterations = 4;
        cfg.n_candidates = 128;
        cfg.master_seed = seed;
        const auto result = run_bayesopt(ds, start, cfg, 12);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(result.beta.alpha[i] >= 0.5 * start.alpha[i] - 1e-12);
            CHECK(result.beta.alpha[i] <= 1.5 * start.alpha[i] + 1e-12);
        }
    }
}

TEST_CASE("best observed score is non-decreasing along the trace") {
    const auto ds = tilted_fixture(31);
    BoConfig cfg;
    cfg.iterations = 6;
    cfg.n_candidates = 256;
    cfg.master_seed = 9;
    const auto result = run_bayesopt(ds, params({1.0, 1.0, 1.0}), cfg, 12);
    double best = -1.0;
    for (const auto& obs : result.trace) {
        best = std::max(best, obs.score);
        CHECK(best <= result.best_score + 1e-15);
    }
    CHECK(best == result.best_score);
}

TEST_CASE("runs are bit-identical across thread counts") {
    const auto ds = tilted_fixture(37);
    BoConfig cfg;
    cfg.iterations = 4;
    cfg.n_candidates = 333;
    cfg.master_seed = 5;
    const auto a = run_bayesopt(ds, params({1.0, 1.0, 1.0}), cfg, 12, 1);
    const auto b = run_bayesopt(ds, params({1.0, 1.0, 1.0}), cfg, 12, 8);
    CHECK(a.beta.alpha == b.beta.alpha);
    CHECK(a.best_score == b.best_score);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].beta == b.trace[i].beta);
        CHECK(a.trace[i].score == b.trace[i].score);
    }
}

TEST_CASE("design points carry no EI, acquisition picks do") {
    const auto ds = tilted_fixture(41);
    BoConfig cfg;
    cfg.iterations = 2;
    cfg.n_init = 4;
    cfg.n_candidates = 64;
    const auto result = run_bayesopt(ds, params({1.0, 1.0, 1.0}), cfg, 12);
    REQUIRE(result.trace.size() == 6);
    for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(result.trace[i].ei.has_value());
    for (std::size_t i = 4; i < 6; ++i) CHECK(result.trace[i].ei.has_value());
}

} // TEST_SUITE
