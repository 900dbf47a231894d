#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "rbdsde/errors.hpp"
#include "rbdsde/generators.hpp"

using namespace rbdsde;

namespace {

GeneratorSpec scalar_generator(std::function<double(double)> p, double C = 1.0) {
    GeneratorSpec g;
    g.f = [p](double, std::span<const double>, double y, std::span<const double>) { return p(y); };
    g.modulus = ModulusSpec::lipschitz(1.0);
    g.modulus.z_lipschitz = C;
    g.growth_phi = [](double) { return 1.0; };
    g.growth_constant = 1.0;
    return g;
}

GeneratorSpec separable_generator(std::function<double(double)> p, double C = 1.0) {
    auto g = scalar_generator(p, C);
    g.separable = SeparableForm{p, [](double, std::span<const double>, std::span<const double>) { return 0.0; }};
    return g;
}

const std::vector<double> kZero{0.0};

}  // namespace

TEST_CASE("catalog entries evaluate as documented") {
    const auto p = builtin_problem("paper-1-4", {{"C", 2.0}, {"alpha", 0.5}, {"T", 1.0}});
    CHECK(p.gen.f(0.3, kZero, 0.0, kZero) == doctest::Approx(1.0));
    std::vector<double> g(1);
    p.gen.g(0.3, kZero, 0.0, kZero, g);
    CHECK(g[0] == doctest::Approx(1.0));
    const std::vector<double> z{2.0};
    CHECK(p.gen.f(0.0, kZero, 1.0, z) == doctest::Approx(std::exp(-1.0) + 2.0));
    CHECK(p.gen.g_depends_on_z);
    CHECK_FALSE(builtin_problem("paper-1-4", {{"g_uses_z", 0.0}}).gen.g_depends_on_z);

    const auto zero = builtin_problem("lipschitz-linear", {{"a", 0.0}, {"b", 0.0}});
    for (const auto& s : sample_arguments(zero, 200, 10.0, 3)) CHECK(zero.gen.f(s.t, s.x, s.y, s.z) == 0.0);
    CHECK_FALSE(zero.gen.has_g());

    const auto put = builtin_problem("american-put-like");
    for (const auto& s : sample_arguments(put, 200, 1.0, 4))
        CHECK(put.obstacle(put.horizon, s.x) == put.terminal(s.x));

    CHECK_THROWS_AS(builtin_problem("no-such-problem"), CatalogError);
    CHECK_THROWS_AS(builtin_problem("paper-1-4", {{"gamma", 1.0}}), CatalogError);
    CHECK_THROWS_AS(builtin_problem("paper-1-4", {{"alpha", 1.5}}), CatalogError);
}

TEST_CASE("catalog problems satisfy their standing assumptions") {
    for (const auto& name : catalog_names()) {
        CAPTURE(name);
        const auto p = builtin_problem(name);
        CHECK(check_problem_invariants(p, 1000, 11).all());
        const auto bounds = check_generator_bounds(p, 10000, 1e-12, 12);
        CHECK(bounds.passed());
        CHECK(bounds.worst_f_excess <= 1e-12);
    }
    // Declaring a modulus that is too small is caught.
    auto p = builtin_problem("paper-1-4");
    p.gen.modulus = ModulusSpec::lipschitz(0.5);
    p.gen.modulus.z_lipschitz = 2.0;
    CHECK_FALSE(check_generator_bounds(p, 10000, 1e-12, 12).f_ok);
}

TEST_CASE("expression problems") {
    ExpressionProblem def;
    def.f = "a*y + b*z";
    def.g = "0.1*sin(y)";
    def.terminal = "max(x, 0)";
    def.obstacle = "0";
    def.parameters = {{"a", 0.5}, {"b", 0.25}};
    const auto p = expression_problem(def);
    const std::vector<double> z{2.0};
    CHECK(p.gen.f(0.0, kZero, 2.0, z) == doctest::Approx(1.5));
    CHECK_FALSE(p.gen.g_depends_on_z);
    CHECK(p.obstacle_at(0.0, kZero) == 0.0);

    def.obstacle.clear();
    CHECK(expression_problem(def).obstacle_at(0.0, kZero) == -std::numeric_limits<double>::infinity());
    def.g = "z";
    CHECK(expression_problem(def).gen.g_depends_on_z);
    def.f = "x2";
    CHECK_THROWS_AS(expression_problem(def), ParseError);
}

TEST_CASE("envelopes of simple functions") {
    // |y| is 1-Lipschitz: the infimum is attained at u = y.
    const auto absolute = lipschitz_envelope(separable_generator([](double y) { return std::abs(y); }), 1,
                                             EnvelopeDirection::Lower);
    CHECK(absolute(0.0, kZero, 0.0, kZero) == 0.0);

    const auto bump = [](double y) { return std::exp(-std::abs(y)); };
    const auto lower = lipschitz_envelope(separable_generator(bump), 2, EnvelopeDirection::Lower);
    // Brute-force oracle on an independent 10^5-point grid over [-5, 5].
    double oracle = std::numeric_limits<double>::infinity();
    for (int j = 0; j <= 100000; ++j) {
        const double u = -5.0 + 1e-4 * j;
        oracle = std::min(oracle, bump(u) + 2.0 * std::abs(1.0 - u));
    }
    const double tol = lower.grid_tol(0.0, kZero, 1.0, kZero);
    CHECK(std::abs(lower(0.0, kZero, 1.0, kZero) - oracle) <= tol);
    CHECK(lower(0.0, kZero, 1.0, kZero) == doctest::Approx(std::exp(-1.0)));

    // A function already n-Lipschitz equals its envelopes on grid points.
    for (double y : {-3.0, -0.5, 0.0, 0.25, 2.0}) {
        CHECK(lower(0.0, kZero, y, kZero) == doctest::Approx(bump(y)).epsilon(1e-14));
        const auto upper = lipschitz_envelope(separable_generator(bump), 2, EnvelopeDirection::Upper);
        CHECK(upper(0.0, kZero, y, kZero) == doctest::Approx(bump(y)).epsilon(1e-14));
    }
}

TEST_CASE("envelopes of a non-Lipschitz profile against closed forms") {
    const auto root = [](double y) { return std::sqrt(std::abs(y)); };
    // sup_u sqrt|u| - 4|u| = 1/16 at u = 1/64; inf_u sqrt|u| + 4|u| = 0 at u = 0.
    for (bool separable : {true, false}) {
        CAPTURE(separable);
        const auto base = separable ? separable_generator(root) : scalar_generator(root);
        const EnvelopeGrid grid{2.0, 1e-3};
        const auto up = lipschitz_envelope(base, 4, EnvelopeDirection::Upper, grid);
        const auto lo = lipschitz_envelope(base, 4, EnvelopeDirection::Lower, grid);
        const auto v = up.evaluate(0.0, kZero, 0.0, kZero);
        CHECK(std::abs(v.value - 1.0 / 16.0) <= up.grid_tol(0.0, kZero, 0.0, kZero));
        CHECK(v.argmin == doctest::Approx(1.0 / 64.0).epsilon(0.1));
        CHECK(lo(0.0, kZero, 0.0, kZero) == 0.0);
        // fast path and full scan agree
        for (double y : {-1.5, -0.01, 0.0, 0.3, 1.999})
            CHECK(std::abs(up(0.0, kZero, y, kZero) - up.reference(0.0, kZero, y, kZero).value) <= 1e-12);
    }
}

TEST_CASE("envelope preconditions") {
    const auto base = separable_generator([](double y) { return y; }, 3.5);
    CHECK_THROWS_AS(lipschitz_envelope(base, 3, EnvelopeDirection::Lower), std::invalid_argument);
    const auto ok = lipschitz_envelope(base, 4, EnvelopeDirection::Lower);
    CHECK_THROWS_AS(ok(0.0, kZero, 60.0, kZero), RangeError);
}

TEST_CASE("envelope properties on the non-Lipschitz example") {
    const auto p = builtin_problem("paper-1-4");
    const auto samples = sample_arguments(p, 2000, 10.0, 21);
    const std::vector<int> ns{4, 8, 16, 32};
    const auto rep = envelope_property_check(p.gen, ns, samples, {}, 200);
    CHECK(rep.all());
    CHECK(rep.truncated == 0);
    // the y-part is (T^-1/4)-Lipschitz, so every envelope coincides with f
    for (std::size_t k = 1; k < ns.size(); ++k) CHECK(rep.lower_error[k] <= rep.lower_error[k - 1] + 1e-12);
}

TEST_CASE("envelope properties with genuine approximation error") {
    auto base = separable_generator([](double y) { return std::sqrt(std::abs(y)); });
    ProblemSpec p;
    p.x0 = {0.0};
    const auto samples = sample_arguments(p, 2000, 5.0, 22);
    const std::vector<int> ns{4, 8, 16, 32};
    const auto rep = envelope_property_check(base, ns, samples, {}, 100);
    CHECK(rep.all());
    CHECK(rep.upper_error.back() < rep.upper_error.front());
    CHECK(rep.upper_error.front() > 0.01);
}

TEST_CASE("truncation by a too small grid is flagged as a range error") {
    const auto base = separable_generator([](double y) { return -6.0 * std::abs(y); });
    ProblemSpec p;
    p.x0 = {0.0};
    const auto samples = sample_arguments(p, 200, 1.0, 23);
    const std::vector<int> ns{1, 2};
    const auto rep = envelope_property_check(base, ns, samples, {2.0, 1e-3});
    CHECK(rep.range_error);
    CHECK(rep.truncated > 0);
    CHECK(rep.properties());
    CHECK_FALSE(rep.all());
}
