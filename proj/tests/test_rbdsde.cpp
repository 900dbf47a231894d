#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "rbdsde/errors.hpp"
#include "rbdsde/parallel.hpp"
#include "rbdsde/rbdsde.hpp"

using namespace rbdsde;

namespace {

struct Setup {
    ProblemSpec problem;
    NoiseEnsemble noise;
    ForwardEnsemble forward;
};

Setup prepare(ProblemSpec problem, std::size_t steps, long paths, std::uint64_t seed) {
    auto noise = sample_noise(build_grid(problem.horizon, static_cast<long>(steps)), paths,
                              static_cast<long>(problem.d), static_cast<long>(problem.gen.ell), seed);
    auto forward = simulate_forward(problem, 0.0, problem.x0, noise);
    return {std::move(problem), std::move(noise), std::move(forward)};
}

ProblemSpec martingale_problem() {
    ExpressionProblem def;
    def.f = "0";
    def.terminal = "x";
    return expression_problem(def);
}

double stderr_at(const ProcessSample& p, std::size_t i) {
    const double m = p.mean_at(i);
    double s = 0.0;
    for (std::size_t k = 0; k < p.num_paths(); ++k) s += (p(k, i) - m) * (p(k, i) - m);
    const double n = static_cast<double>(p.num_paths());
    return std::sqrt(s / (n - 1.0) / n);
}

}  // namespace

TEST_CASE("martingale representation of X_T") {
    auto s = prepare(martingale_problem(), 20, 20000, 11);
    SolverConfig cfg;
    const ProcessSample zero(s.noise.grid(), 20000, 1, ProcessKind::YLike);
    const auto sol = solve_frozen_rbdsde(s.problem, zero, s.forward, s.noise, RegressionBasis::polynomial(2), cfg);
    // Oracle: E[X_T | X_i] = X_i, Z = 1.
    for (std::size_t i = 0; i <= 20; ++i) {
        double err = 0.0;
        for (std::size_t k = 0; k < 20000; ++k) err += std::pow(sol.Y(k, i) - s.forward.paths(k, i), 2);
        CHECK(std::sqrt(err / 20000.0) < 0.02);
        CHECK(sol.K.mean_at(i) == 0.0);
    }
    for (std::size_t i = 0; i < 20; ++i) CHECK(sol.Z.mean_at(i) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(skorokhod_residual(sol) == 0.0);
}

TEST_CASE("constant solution sitting on the obstacle") {
    ExpressionProblem def;
    def.terminal = "0.75";
    def.obstacle = "0.75";
    auto s = prepare(expression_problem(def), 10, 500, 12);
    SolverConfig exact;
    exact.ridge = 0.0;
    const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), exact);
    for (double y : r.solution.Y.values()) CHECK(y == doctest::Approx(0.75).epsilon(1e-12));
    for (double k : r.solution.K.values()) CHECK(std::abs(k) < 1e-12);
    // The ridge shrinks the fitted constant by a relative 1e-8 per step.
    const auto ridged = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), {});
    for (double k : ridged.solution.K.values()) CHECK(std::abs(k) < 1e-6);
}

TEST_CASE("american put against the binomial tree") {
    auto s = prepare(builtin_problem("american-put-like"), 50, 100000, 1);
    SolverConfig cfg;
    cfg.picard_tol = 1e-10;
    const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::local_polynomial(32, 1), cfg);
    const double oracle = oracles::american_put_crr(1.0, 1.0, 0.06, 0.2, 1.0, 2000);
    CHECK(r.converged);
    CHECK(r.solution.Y.mean_at(0) == doctest::Approx(oracle).epsilon(0.01));

    const auto inv = count_invariant_violations(r.solution);
    CHECK(inv.reflection == 0);
    CHECK(inv.minimal_push == 0);
    CHECK(inv.monotone_k == 0);
    const double scale = std::sqrt(empirical_norm(r.solution.Y, NormKind::S2)) * r.solution.K.mean_at(50);
    CHECK(skorokhod_residual(r.solution) <= 1e-2 * scale);
}

TEST_CASE("y-free generator converges in two sweeps") {
    auto s = prepare(builtin_problem("lipschitz-linear", {{"a", 0.0}}), 20, 4000, 13);
    const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), {});
    CHECK(r.converged);
    CHECK(r.iterations == 2);
    CHECK(r.gaps[1] == 0.0);
}

TEST_CASE("non-Lipschitz desk instance: gaps decrease") {
    auto s = prepare(builtin_problem("paper-1-4"), 50, 20000, 7);
    const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), {});
    CHECK(r.converged);
    CHECK(r.iterations <= 12);
    for (std::size_t j = 2; j < r.gaps.size(); ++j) CHECK(r.gaps[j] < r.gaps[j - 1]);
    CHECK(r.gaps.back() < 1e-4);
    CHECK(r.trace.size() == r.iterations);
    CHECK(r.trace.back().size() == 51);
}

TEST_CASE("Picard limit agrees with the y-implicit scheme") {
    auto s = prepare(builtin_problem("lipschitz-linear"), 50, 20000, 14);
    SolverConfig cfg;
    cfg.picard_tol = 1e-14;
    const auto basis = RegressionBasis::polynomial(2);
    const auto r = picard_solve(s.problem, s.forward, s.noise, basis, cfg);
    CHECK(r.converged);
    const auto implicit = oracles::implicit_linear_rbsde(s.problem, s.forward, s.noise, basis);
    for (std::size_t i = 0; i <= 50; ++i) {
        const double se = stderr_at(r.solution.Y, std::max<std::size_t>(i, 1));
        CHECK(std::abs(r.solution.Y.mean_at(i) - implicit.mean_at(i)) <= 2.0 * se);
    }
}

TEST_CASE("Picard fixed point is reproduced") {
    auto s = prepare(builtin_problem("log-modulus"), 25, 4000, 15);
    SolverConfig cfg;
    const auto basis = RegressionBasis::polynomial(2);
    const auto r = picard_solve(s.problem, s.forward, s.noise, basis, cfg);
    const auto again = solve_frozen_rbdsde(s.problem, r.solution.Y, s.forward, s.noise, basis, cfg);
    for (std::size_t i = 0; i <= 25; ++i) {
        double gap = 0.0;
        for (std::size_t k = 0; k < 4000; ++k) gap += std::pow(again.Y(k, i) - r.solution.Y(k, i), 2);
        CHECK(gap / 4000.0 < cfg.picard_tol);
    }
}

TEST_CASE("g = 0 without obstacle reduces to the plain regression scheme") {
    auto problem = builtin_problem("lipschitz-linear");
    problem.obstacle = {};
    auto s = prepare(problem, 40, 5000, 16);
    SolverConfig cfg;
    cfg.ridge = 0.0;
    cfg.picard_tol = 1e-12;
    const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), cfg);
    const auto ref = oracles::plain_regression_bsde(s.problem, s.forward, s.noise, 2, r.iterations);
    double worst = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) worst = std::max(worst, std::abs(ref[j] - r.solution.Y.values()[j]));
    CHECK(worst < 1e-10);
    for (double k : r.solution.K.values()) CHECK(k == 0.0);
}

TEST_CASE("late start holds the start value before t") {
    const auto problem = builtin_problem("lipschitz-linear");
    const auto noise = sample_noise(build_grid(1.0, 20), 3000, 1, 1, 17);
    const std::vector<double> x{0.2};
    const auto forward = simulate_forward(problem, 0.5, x, noise);
    const auto r = picard_solve(problem, forward, noise, RegressionBasis::polynomial(2), {});
    CHECK(r.solution.start_index == 10);
    for (std::size_t k = 0; k < 3000; k += 97) {
        for (std::size_t i = 0; i <= 10; ++i) CHECK(r.solution.Y(k, i) == r.solution.Y(0, 10));
        CHECK(r.solution.K(k, 10) == 0.0);
    }
}

TEST_CASE("non-finite generator values name the node") {
    ExpressionProblem def;
    def.f = "log(y - 5)";
    auto s = prepare(expression_problem(def), 10, 200, 18);
    const ProcessSample zero(s.noise.grid(), 200, 1, ProcessKind::YLike);
    try {
        solve_frozen_rbdsde(s.problem, zero, s.forward, s.noise, RegressionBasis::polynomial(1), {});
        FAIL("expected a generator evaluation error");
    } catch (const GeneratorEvaluationError& e) {
        CHECK(e.node() == 9);
    }
}

TEST_CASE("skorokhod residual edge cases") {
    const auto grid = build_grid(1.0, 4);
    std::vector<double> y{1, 2, 3, 4, 5}, k{0, 0.5, 0.5, 1.0, 2.0};
    const ProcessSample Y(grid, 1, 1, ProcessKind::YLike, y);
    const ProcessSample Kz(grid, 1, 1, ProcessKind::KLike);
    const ProcessSample K(grid, 1, 1, ProcessKind::KLike, k);
    const ProcessSample S(grid, 1, 1, ProcessKind::YLike, {0, 0, 0, 0, 0});
    CHECK(skorokhod_residual(Y, Kz, S) == 0.0);
    CHECK(skorokhod_residual(Y, K, Y) == 0.0);
    // (1 - 0) 0.5 + (3 - 0) 0.5 + (4 - 0) 1
    CHECK(skorokhod_residual(Y, K, S) == doctest::Approx(6.0));
}

TEST_CASE("comparison fixtures are ordered") {
    // Bin averages are a positive projection, so the discrete scheme itself is
    // monotone; global polynomials are not and overshoot in the tails.
    for (const auto& fx : comparison_fixtures()) {
        CAPTURE(fx.name);
        auto s = prepare(fx.lower, 50, 20000, 19);
        const auto rep = comparison_experiment(fx.lower, fx.upper, s.forward, s.noise,
                                               RegressionBasis::piecewise_constant(16), {});
        CHECK(rep.within_tolerance);
        CHECK(rep.y0_1 <= rep.y0_2);
    }
    auto fx = comparison_fixtures().front();
    auto s = prepare(fx.lower, 20, 2000, 20);
    const auto same = comparison_experiment(fx.lower, fx.lower, s.forward, s.noise, RegressionBasis::polynomial(2), {});
    CHECK(same.max_mean_violation == 0.0);
    CHECK(same.violation_fraction == 0.0);
    CHECK_THROWS_AS(
        comparison_experiment(fx.upper, fx.lower, s.forward, s.noise, RegressionBasis::polynomial(2), {}),
        SetupError);
}

TEST_CASE("gaps against the majorant") {
    SUBCASE("vanishing modulus, y-free generator") {
        auto s = prepare(builtin_problem("lipschitz-linear", {{"a", 0.0}}), 20, 4000, 21);
        const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), {});
        const auto phi = majorant_sequence(ModulusSpec::lipschitz(0.0), 1.0, 1.0, s.noise.grid(), 5);
        const auto rep = picard_gap_vs_majorant(r, phi);
        CHECK(rep.entries.size() == 1);
        CHECK(rep.all_within());
    }
    SUBCASE("Lipschitz catalog instance") {
        auto s = prepare(builtin_problem("lipschitz-linear"), 100, 20000, 22);
        SolverConfig cfg;
        cfg.picard_tol = 1e-12;
        const auto r = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), cfg);
        const auto& gen = s.problem.gen;
        const double c = 1.0;
        const double M = majorant_constant(c, gen.C(), gen.alpha(), s.problem.horizon);
        const auto mu = measure_moment_bound(s.problem, s.forward, c);
        const auto phi = majorant_sequence(gen.modulus, M, 2.0 * mu.mu, s.noise.grid(), r.iterations + 1);
        const auto rep = picard_gap_vs_majorant(r, phi);
        CHECK(rep.entries.size() >= 2);
        for (const auto& e : rep.entries)
            if (e.n >= 2) CHECK(e.within);
    }
}

TEST_CASE("results do not depend on the thread cap") {
    auto s = prepare(builtin_problem("paper-1-4"), 20, 5000, 23);
    set_thread_cap(1);
    const auto one = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), {});
    set_thread_cap(3);
    const auto three = picard_solve(s.problem, s.forward, s.noise, RegressionBasis::polynomial(2), {});
    set_thread_cap(1);
    CHECK(std::ranges::equal(one.solution.Y.values(), three.solution.Y.values()));
    CHECK(one.gaps == three.gaps);
}

TEST_CASE("solver configuration validation") {
    SolverConfig cfg;
    cfg.picard_tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.picard_max_iter = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(z_scheme_from_string(to_string(ZScheme::FiniteIncrement)) == ZScheme::FiniteIncrement);
}

TEST_CASE("centred Z increments have the same mean") {
    auto s = prepare(martingale_problem(), 20, 20000, 24);
    SolverConfig cfg;
    cfg.z_scheme = ZScheme::FiniteIncrement;
    const ProcessSample zero(s.noise.grid(), 20000, 1, ProcessKind::YLike);
    const auto sol = solve_frozen_rbdsde(s.problem, zero, s.forward, s.noise, RegressionBasis::polynomial(2), cfg);
    for (std::size_t i = 0; i < 20; ++i) CHECK(sol.Z.mean_at(i) == doctest::Approx(1.0).epsilon(0.05));
}
