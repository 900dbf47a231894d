#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "rbdsde/errors.hpp"
#include "rbdsde/modulus.hpp"

using namespace rbdsde;

namespace {

std::vector<double> log_nodes(double lo, double hi, int per_decade) {
    std::vector<double> u;
    const int n = static_cast<int>(std::round(std::log10(hi / lo) * per_decade));
    for (int k = 0; k <= n; ++k) u.push_back(lo * std::pow(10.0, static_cast<double>(k) / per_decade));
    return u;
}

ModulusSpec sqrt_modulus() {
    const auto nodes = log_nodes(1e-16, 10.0, 200);
    return ModulusSpec::tabulate([](double u) { return std::sqrt(u); }, nodes);
}

std::vector<double> decade_ladder() {
    std::vector<double> eps;
    for (int k = 2; k <= 12; ++k) eps.push_back(std::pow(10.0, -k));
    return eps;
}

}  // namespace

TEST_CASE("modulus evaluation") {
    CHECK(eval_modulus(ModulusSpec::lipschitz(2.0), 0.0, 3.0) == 6.0);
    for (const auto& m : {ModulusSpec::lipschitz(2.0), ModulusSpec::log_modulus(),
                          ModulusSpec::loglog_modulus(), sqrt_modulus()})
        CHECK(eval_modulus(m, 0.3, 0.0) == 0.0);

    const auto log01 = ModulusSpec::log_modulus(0.1);
    CHECK(eval_modulus(log01, 0.0, 0.01) == doctest::Approx(0.046051701859880914).epsilon(1e-14));
    // C^1 extension: slope ln(1/delta) - 1 beyond delta.
    CHECK(log01.extension_slope() == doctest::Approx(std::log(10.0) - 1.0));
    CHECK(eval_modulus(log01, 0.0, 0.2) ==
          doctest::Approx(0.1 * std::log(10.0) + (std::log(10.0) - 1.0) * 0.1));

    CHECK_THROWS_AS(eval_modulus(log01, 0.0, -1e-3), std::invalid_argument);
    CHECK_THROWS_AS(ModulusSpec::log_modulus(0.5), std::invalid_argument);
    // u ln(1/u) ln ln(1/u) is already decreasing at e^-2.
    CHECK_THROWS_AS(ModulusSpec::loglog_modulus(std::exp(-2.0)), std::invalid_argument);
    CHECK(ModulusSpec::loglog_modulus().extension_slope() > 0.0);
}

TEST_CASE("tabulated modulus interpolates and loads from CSV") {
    std::istringstream csv("u,rho\n0,0\n1,2\n3,3\n");
    const auto m = load_tabulated_modulus(csv);
    CHECK(m(0.0, 0.5) == doctest::Approx(1.0));
    CHECK(m(0.0, 2.0) == doctest::Approx(2.5));
    CHECK(m(0.0, 5.0) == doctest::Approx(4.0));  // last slope extended
    CHECK_THROWS_AS(ModulusSpec::tabulated({{0.1, 0.0}, {1.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("modulus axioms") {
    for (const auto& m : {ModulusSpec::lipschitz(1.0), ModulusSpec::log_modulus(),
                          ModulusSpec::loglog_modulus(), sqrt_modulus()}) {
        const auto r = verify_modulus_axioms(m, 1000, 1e-9);
        CHECK(r.all());
    }
    const auto edge = verify_modulus_axioms(ModulusSpec::log_modulus(std::exp(-1.0)), 1000, 1e-9);
    CHECK(edge.all());

    const auto square = ModulusSpec::tabulate([](double u) { return u * u; }, log_nodes(1e-6, 10.0, 20));
    const auto r = verify_modulus_axioms(square, 1000, 1e-9);
    CHECK(r.zero_at_zero);
    CHECK(r.monotone);
    CHECK_FALSE(r.concave);
    CHECK_FALSE(r.all());
}

TEST_CASE("Osgood integral matches closed forms") {
    const auto eps = decade_ladder();
    {
        const double c = 2.5;
        const auto rep = condition_a_uniqueness_check(ModulusSpec::lipschitz(c), 1.0, 1.0, eps);
        for (std::size_t k = 0; k < eps.size(); ++k)
            CHECK(rep.osgood_integral[k] == doctest::Approx(std::log(1.0 / eps[k]) / c).epsilon(1e-9));
        // u(0) = eps e^{M c T}
        CHECK(rep.shooting_start.back() == doctest::Approx(eps.back() * std::exp(c)).epsilon(1e-7));
    }
    {
        const auto rep = condition_a_uniqueness_check(sqrt_modulus(), 1.0, 1.0, eps);
        for (std::size_t k = 0; k < eps.size(); ++k)
            CHECK(rep.osgood_integral[k] ==
                  doctest::Approx(2.0 * (1.0 - std::sqrt(eps[k]))).epsilon(2e-5));
    }
    {
        // delta = e^-2: u ln(1/u) below delta, u + delta above it.
        const double delta = std::exp(-2.0);
        const auto rep = condition_a_uniqueness_check(ModulusSpec::log_modulus(), 1.0, 1.0, eps);
        for (std::size_t k = 0; k < eps.size(); ++k) {
            const double expected = std::log(std::log(1.0 / eps[k])) - std::log(2.0) +
                                    std::log((1.0 + delta) / (2.0 * delta));
            CHECK(rep.osgood_integral[k] == doctest::Approx(expected).epsilon(1e-8));
        }
    }
}

TEST_CASE("uniqueness verdicts for the four reference moduli") {
    const auto eps = decade_ladder();
    CHECK(condition_a_uniqueness_check(ModulusSpec::lipschitz(1.0), 1.0, 1.0, eps).verdict ==
          Verdict::Passes);
    CHECK(condition_a_uniqueness_check(ModulusSpec::log_modulus(), 1.0, 1.0, eps).verdict ==
          Verdict::Passes);
    CHECK(condition_a_uniqueness_check(ModulusSpec::loglog_modulus(), 1.0, 1.0, eps).verdict ==
          Verdict::Passes);
    const auto sq = condition_a_uniqueness_check(sqrt_modulus(), 1.0, 1.0, eps);
    CHECK(sq.verdict == Verdict::Fails);
    CHECK_FALSE(sq.osgood_diverges);
    CHECK_FALSE(sq.shooting_vanishes);
    // u(0) = (sqrt(eps) + M T / 2)^2 tends to 1/4, not to 0.
    CHECK(sq.shooting_start.back() == doctest::Approx(0.25).epsilon(2e-5));
}

TEST_CASE("uniqueness check edge cases") {
    const auto eps = decade_ladder();
    const auto flat = ModulusSpec::tabulated({{0.0, 0.0}, {1e-3, 0.0}, {1.0, 1.0}});
    CHECK(condition_a_uniqueness_check(flat, 1.0, 1.0, eps).verdict == Verdict::Inconclusive);
    CHECK(condition_a_uniqueness_check(ModulusSpec::lipschitz(0.0), 1.0, 1.0, eps).verdict ==
          Verdict::Inconclusive);
    const std::vector<double> rising{1e-3, 1e-2, 1e-4, 1e-5};
    CHECK_THROWS_AS(condition_a_uniqueness_check(ModulusSpec::lipschitz(1.0), 1.0, 1.0, rising),
                    std::invalid_argument);
}

TEST_CASE("majorant sequence") {
    SUBCASE("zero modulus gives zero majorants") {
        const auto seq = majorant_sequence(ModulusSpec::lipschitz(0.0), 2.0, 1.0, build_grid(1.0, 10), 5);
        for (std::size_t n = 0; n < seq.size(); ++n)
            for (double v : seq.phi(n)) CHECK(v == 0.0);
    }
    SUBCASE("Lipschitz closed form") {
        // phi_n(t) = M1 (M c)^{n+1} (T - t)^{n+1} / (n+1)!
        const double M = 1.5, c = 0.5, M1 = 1.0;
        const auto grid = build_grid(1.0, 10000);
        const auto seq = majorant_sequence(ModulusSpec::lipschitz(c), M, M1, grid, 8);
        REQUIRE(seq.size() == 9);
        for (std::size_t n = 0; n < seq.size(); ++n)
            for (std::size_t i = 0; i < grid.num_nodes(); i += 250) {
                const double tau = 1.0 - grid.node(i);
                const double bound =
                    M1 * std::pow(M * c * tau, static_cast<double>(n + 1)) / std::tgamma(n + 2.0);
                CHECK(std::abs(seq.at(n, i) - bound) <= 1e-8);
            }
    }
    SUBCASE("non-increasing and vanishing at T for every built-in") {
        const auto grid = build_grid(0.5, 200);
        for (const auto& m : {ModulusSpec::lipschitz(1.0), ModulusSpec::log_modulus(),
                              ModulusSpec::loglog_modulus(), sqrt_modulus()}) {
            const auto seq = majorant_sequence(m, 1.5, 1.0, grid, 12);
            CHECK(seq.within_proof_regime());
            CHECK(seq.non_increasing());
            for (std::size_t n = 0; n < seq.size(); ++n) CHECK(seq.phi(n).back() == 0.0);
        }
    }
    SUBCASE("early stop once below tolerance") {
        const auto seq = majorant_sequence(ModulusSpec::lipschitz(0.1), 1.0, 1e-3, build_grid(1.0, 50), 100, 1e-12);
        CHECK(seq.size() < 101);
    }
}

TEST_CASE("horizon partition") {
    auto unit = [](std::size_t, double) { return 1.0; };
    SUBCASE("Lipschitz rho = u: segments of length mu / (M rho(2 mu)) = 1/2") {
        const auto bp = horizon_partition(ModulusSpec::lipschitz(1.0), 1.0, unit, 3.0);
        REQUIRE(bp.size() == 7);
        for (std::size_t p = 0; p < bp.size(); ++p)
            CHECK(bp[p] == doctest::Approx(3.0 - 0.5 * static_cast<double>(p)).epsilon(1e-9));
        CHECK(bp.back() == 0.0);
    }
    SUBCASE("small mass: single segment") {
        const auto bp = horizon_partition(ModulusSpec::lipschitz(0.1), 1.0, unit, 1.0);
        REQUIRE(bp.size() == 2);
        CHECK(bp[1] == 0.0);
    }
    SUBCASE("large mass: first breakpoint close to T, many segments, exact tiling") {
        const auto bp = horizon_partition(ModulusSpec::lipschitz(1000.0), 1.0, unit, 1.0);
        CHECK(bp[1] == doctest::Approx(1.0 - 1.0 / 2000.0).epsilon(1e-9));
        CHECK(bp.size() > 1900);
        double total = 0.0;
        for (std::size_t p = 1; p < bp.size(); ++p) {
            CHECK(bp[p] < bp[p - 1]);
            total += bp[p - 1] - bp[p];
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    SUBCASE("cap exceeded") {
        CHECK_THROWS_AS(horizon_partition(ModulusSpec::lipschitz(1.0), 1.0, unit, 3.0, 5),
                        NonTerminationError);
    }
}

TEST_CASE("majorant constant M") {
    CHECK(majorant_constant(1.0, 1.0, 0.5, 0.0) == doctest::Approx(1.5));
    CHECK(majorant_constant(1.0, 1.0, 0.5, 1.0) == doctest::Approx(1.5 * std::exp(2.0)));
    CHECK(std::isfinite(majorant_constant(1.0, 1.0, 0.999, 1.0)));
    CHECK(majorant_constant(1.0, 1.0, 0.999, 1.0) > majorant_constant(1.0, 1.0, 0.9, 1.0));
    CHECK_THROWS_AS(majorant_constant(1.0, 1.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(majorant_constant(1.0, 1.0, 0.0, 1.0), std::invalid_argument);
}
