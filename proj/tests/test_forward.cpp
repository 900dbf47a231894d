#include <cmath>
#include <vector>

#include "doctest.h"
#include "rbdsde/forward.hpp"
#include "rbdsde/parallel.hpp"

using namespace rbdsde;

namespace {

ProblemSpec sde(const std::string& drift, const std::string& diffusion, double x0 = 0.0) {
    ExpressionProblem def;
    def.drift = drift;
    def.diffusion = diffusion;
    def.x0 = x0;
    return expression_problem(def);
}

}  // namespace

TEST_CASE("degenerate coefficients") {
    const auto noise = sample_noise(build_grid(1.0, 20), 50, 1, 1, 1);
    const std::vector<double> x{0.7};
    const auto still = simulate_forward(sde("0", "0"), 0.0, x, noise);
    for (double v : still.paths.values()) CHECK(v == 0.7);

    const std::vector<double> origin{0.0};
    const auto brownian = simulate_forward(sde("0", "1"), 0.0, origin, noise);
    for (std::size_t k = 0; k < 50; ++k) {
        double w = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            w += noise.w(k, i);
            CHECK(brownian.paths(k, i + 1) == w);
        }
    }
}

TEST_CASE("late start freezes earlier nodes at x") {
    const auto noise = sample_noise(build_grid(1.0, 10), 20, 1, 1, 2);
    const std::vector<double> x{1.5};
    const auto f = simulate_forward(sde("1", "1"), 0.5, x, noise);
    CHECK(f.start_index == 5);
    for (std::size_t k = 0; k < 20; ++k) {
        for (std::size_t i = 0; i <= 5; ++i) CHECK(f.paths(k, i) == 1.5);
        CHECK(f.paths(k, 6) == doctest::Approx(1.5 + 0.1 + noise.w(k, 5)));
    }
    CHECK_THROWS_AS(simulate_forward(sde("0", "1"), 0.55, x, noise), std::invalid_argument);
    const std::vector<double> two{0.0, 0.0};
    CHECK_THROWS_AS(simulate_forward(sde("0", "1"), 0.0, two, noise), std::invalid_argument);
}

TEST_CASE("geometric Brownian mean") {
    const auto put = builtin_problem("american-put-like");
    const auto noise = sample_noise(build_grid(1.0, 50), 100000, 1, 1, 3);
    const std::vector<double> x{1.0};
    const auto f = simulate_forward(put, 0.0, x, noise);
    const double mean = f.paths.mean_at(50);
    double var = 0.0;
    for (std::size_t k = 0; k < 100000; ++k) var += (f.paths(k, 50) - mean) * (f.paths(k, 50) - mean);
    const double stderr_ = std::sqrt(var / 99999.0 / 100000.0);
    CHECK(std::abs(mean - std::exp(0.06)) <= 3.0 * stderr_);
}

TEST_CASE("results do not depend on the thread cap") {
    const auto noise = sample_noise(build_grid(1.0, 16), 5000, 1, 1, 4);
    const std::vector<double> x{0.2};
    const auto p = sde("sin(x)", "1 + 0.5*cos(x)");
    const auto one = simulate_forward(p, 0.0, x, noise);
    set_thread_cap(3);
    const auto three = simulate_forward(p, 0.0, x, noise);
    set_thread_cap(1);
    CHECK(std::equal(one.paths.values().begin(), one.paths.values().end(), three.paths.values().begin()));
}

TEST_CASE("flow continuity") {
    const auto noise = sample_noise(build_grid(1.0, 1024), 4000, 1, 1, 5);
    const std::vector<double> x{0.0};
    const auto p = sde("sin(x)", "1 + 0.5*cos(x)");

    CHECK(flow_continuity_test(p, 0.25, x, 0.25, x, 2, noise).estimate == 0.0);
    CHECK_THROWS_AS(flow_continuity_test(p, 0.0, x, 0.0, x, 3, noise), std::invalid_argument);

    const std::vector<double> spatial{1.0, 0.5, 0.25, 0.125};
    const auto space = flow_continuity_ladder(p, 0.0, x, FlowShift::Spatial, spatial, 2, noise);
    CHECK(space.stable);

    const auto brownian = sde("0", "1");
    const std::vector<double> temporal{0.125, 0.0625, 0.03125, 0.015625};
    for (int pw : {2, 4}) {
        CAPTURE(pw);
        const auto time = flow_continuity_ladder(brownian, 0.25, x, FlowShift::Temporal, temporal, pw, noise);
        CHECK(std::abs(time.slope - pw / 2.0) <= 0.15);
    }
}

TEST_CASE("Euler converges with strong order one half") {
    const auto gbm = sde("0.05*x", "0.8*x", 1.0);
    const auto noise = sample_noise(build_grid(1.0, 1024), 20000, 1, 1, 6);
    const std::vector<double> x{1.0};
    const std::vector<std::size_t> factors{64, 32, 16, 8};
    const auto rep = strong_convergence(gbm, x, noise, factors);
    REQUIRE(rep.steps == std::vector<std::size_t>{16, 32, 64, 128});
    for (std::size_t k = 1; k < 4; ++k) CHECK(rep.rms_error[k] < rep.rms_error[k - 1]);
    CHECK(std::abs(rep.slope - 0.5) <= 0.2);
}
