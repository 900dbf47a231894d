#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "rbdsde/errors.hpp"
#include "rbdsde/feynman_kac.hpp"

using namespace rbdsde;

namespace {

NoiseEnsemble noise_for(const ProblemSpec& problem, std::size_t steps, long paths, std::uint64_t seed,
                        std::uint64_t b_index = 0) {
    return sample_noise(build_grid(problem.horizon, static_cast<long>(steps)), paths, static_cast<long>(problem.d),
                        static_cast<long>(problem.gen.ell), seed, b_index);
}

GeneratorSpec g_only(const std::string& g) {
    ExpressionProblem def;
    def.g = g;
    return expression_problem(def).gen;
}

const std::vector<std::vector<double>> kX{{-1.0}, {0.0}, {0.5}};
const std::vector<double> kY{-2.0, -1.0, -0.25, 0.0, 0.5, 1.5};

}  // namespace

TEST_CASE("martingale field is the identity in x") {
    ExpressionProblem def;
    def.terminal = "x";
    const auto problem = expression_problem(def);
    const auto noise = noise_for(problem, 10, 5000, 31);
    const auto field =
        evaluate_u_field(problem, kX, {0, 4, 9, 10}, noise, RegressionBasis::polynomial(2), SolverConfig{});
    CHECK(field.converged);
    CHECK(field.times.size() == 4);
    // Oracle: E[x + W_T - W_t] = x.
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t j = 0; j < kX.size(); ++j)
            CHECK(std::abs(field.at(a, j) - kX[j][0]) < 4.0 * field.std_error[a][j] + 1e-3);
    for (std::size_t j = 0; j < kX.size(); ++j) {
        CHECK(field.at(3, j) == kX[j][0]);
        CHECK(field.std_error[3][j] == 0.0);
    }
    CHECK_THROWS_AS(evaluate_u_field(problem, kX, {11}, noise, RegressionBasis::polynomial(2), SolverConfig{}),
                    std::invalid_argument);
}

TEST_CASE("terminal row equals the terminal function") {
    const auto problem = builtin_problem("american-put-like");
    const auto noise = noise_for(problem, 5, 500, 32);
    const std::vector<std::vector<double>> xs{{0.8}, {1.0}, {1.3}};
    const auto field = evaluate_u_field(problem, xs, {5}, noise, RegressionBasis::polynomial(2), SolverConfig{});
    for (std::size_t j = 0; j < xs.size(); ++j) CHECK(field.at(0, j) == std::max(1.0 - xs[j][0], 0.0));
}

TEST_CASE("put field against the binomial tree") {
    const auto problem = builtin_problem("american-put-like");
    const auto noise = noise_for(problem, 50, 100000, 33);
    SolverConfig cfg;
    cfg.picard_tol = 1e-10;
    const std::vector<std::vector<double>> xs{{0.9}, {1.0}, {1.1}};
    const auto field = evaluate_u_field(problem, xs, {0}, noise, RegressionBasis::local_polynomial(32, 1), cfg);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const double crr = oracles::american_put_crr(xs[j][0], 1.0, 0.06, 0.2, 1.0, 2000);
        CHECK(std::abs(field.at(0, j) - crr) < 0.015 * crr);
    }
}

TEST_CASE("field does not see B when g is zero") {
    const auto problem = builtin_problem("lipschitz-linear");
    const auto one = noise_for(problem, 20, 4000, 34, 0);
    const auto two = resample_b(one, 99, 5);
    const std::vector<std::size_t> nodes{0, 10};
    const auto a = evaluate_u_field(problem, kX, nodes, one, RegressionBasis::polynomial(2), SolverConfig{});
    const auto b = evaluate_u_field(problem, kX, nodes, two, RegressionBasis::polynomial(2), SolverConfig{});
    CHECK(b.b_index == 5);
    for (std::size_t r = 0; r < nodes.size(); ++r)
        for (std::size_t j = 0; j < kX.size(); ++j) CHECK(std::abs(a.at(r, j) - b.at(r, j)) <= 1e-12);
}

TEST_CASE("z-dependent g is rejected") {
    const auto problem = builtin_problem("paper-1-4");
    const auto noise = noise_for(problem, 5, 200, 35);
    CHECK_THROWS_AS(evaluate_u_field(problem, kX, {0}, noise, RegressionBasis::polynomial(2), SolverConfig{}),
                    UnsupportedProblemError);
    CHECK_THROWS_AS(solve_doss_eta(problem.gen, noise, kX, kY), UnsupportedProblemError);
}

TEST_CASE("Doss transform without g is the identity") {
    ExpressionProblem def;
    const auto gen = expression_problem(def).gen;
    const auto noise = sample_noise(build_grid(1.0, 20), 1, 1, 1, 36);
    const auto doss = solve_doss_eta(gen, noise, kX, kY);
    for (std::size_t i = 0; i <= 20; ++i)
        for (std::size_t j = 0; j < kX.size(); ++j)
            for (std::size_t m = 0; m < kY.size(); ++m) {
                CHECK(doss.eta(i, j, m) == kY[m]);
                CHECK(doss.epsilon(i, j, kY[m]) == kY[m]);
            }
}

TEST_CASE("constant g shifts by the backward increment") {
    const auto gen = g_only("0.3");
    const auto noise = sample_noise(build_grid(1.0, 40), 1, 1, 1, 37);
    const auto doss = solve_doss_eta(gen, noise, kX, kY);
    for (std::size_t i = 0; i <= 40; ++i) {
        double tail = 0.0;  // B_T - B_{t_i}
        for (std::size_t s = i; s < 40; ++s) tail += noise.b_step(s)[0];
        for (std::size_t j = 0; j < kX.size(); ++j)
            for (std::size_t m = 0; m < kY.size(); ++m) {
                CHECK(std::abs(doss.eta(i, j, m) - (kY[m] + 0.3 * tail)) < 1e-12);
                CHECK(std::abs(doss.epsilon(i, j, doss.eta(i, j, m)) - kY[m]) < 1e-12);
            }
    }
}

TEST_CASE("inverse error halves with the step for linear g") {
    const auto rep = doss_inverse_convergence(g_only("0.5*y"), 1.0, 50, {{0.0}}, kY, 256, 38);
    CHECK(rep.coarse_error > rep.fine_error);
    CHECK(rep.ratio >= 1.6);
    CHECK(rep.ratio <= 2.4);
}

TEST_CASE("non-monotone eta raises StepSizeError") {
    const auto gen = g_only("y");
    // One step of length 1 with B increment -5: eta = y (1 + 1/2 - 5).
    const NoiseEnsemble noise(build_grid(1.0, 1), 1, 1, 1, 0, 0, {0.0}, {-5.0});
    CHECK_THROWS_AS(solve_doss_eta(gen, noise, kX, kY), StepSizeError);
}

TEST_CASE("envelope fields bracket u monotonically") {
    const auto problem = builtin_problem("paper-1-4", {{"g_uses_z", 0.0}});
    const auto noise = noise_for(problem, 10, 2000, 39);
    const auto rep = monotone_field_sequence(problem, {4, 8, 16}, kX, {0, 5}, noise, RegressionBasis::polynomial(2),
                                             SolverConfig{});
    CHECK(rep.monotonicity_violations == 0);
    CHECK(rep.width_violations == 0);
    CHECK(rep.bracket_violations == 0);
    CHECK(rep.ok());
    REQUIRE(rep.bracket_width.size() == 3);
    CHECK(rep.bracket_width[2] <= rep.bracket_width[0]);
}
