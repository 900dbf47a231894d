#include <cmath>
#include <vector>

#include "doctest.h"
#include "rbdsde/errors.hpp"
#include "rbdsde/expression.hpp"

using namespace rbdsde;

namespace {

double eval(const std::string& text, double y = 0.0, std::vector<double> x = {0.0},
            std::vector<double> z = {0.0}, double t = 0.0) {
    return Expression::parse(text, {{"T", 16.0}, {"a", 0.5}})(t, x, y, z);
}

}  // namespace

TEST_CASE("arithmetic and precedence") {
    CHECK(eval("1 + 2*3") == 7.0);
    CHECK(eval("(1 + 2)*3") == 9.0);
    CHECK(eval("-2^2") == -4.0);
    CHECK(eval("2^3^2") == 512.0);
    CHECK(eval("2^-1") == 0.5);
    CHECK(eval("8/4/2") == 1.0);
    CHECK(eval("1e-3 * 2") == doctest::Approx(2e-3));
    CHECK(eval("pow(2, 10)") == 1024.0);
    CHECK(eval("pi") == doctest::Approx(3.141592653589793));
}

TEST_CASE("variables, parameters and functions") {
    CHECK(eval("exp(-abs(y))/T^(1/4)", -1.0) == doctest::Approx(std::exp(-1.0) / 2.0));
    CHECK(eval("max(x, a) + min(z1, 1)", 0.0, {0.25}, {3.0}) == doctest::Approx(1.5));
    CHECK(eval("x2 - x1", 0.0, {1.0, 4.0}) == 3.0);
    CHECK(eval("t * sqrt(4) + sin(0) + cos(0) + log(e)", 0.0, {0.0}, {0.0}, 2.0) == doctest::Approx(6.0));

    const auto e = Expression::parse("y + x3 * z2");
    CHECK(e.max_x_index() == 3);
    CHECK(e.max_z_index() == 2);
    CHECK(e.uses_y());
    CHECK_FALSE(e.uses_t());
    const double x[1] = {0.0}, z[1] = {0.0};
    CHECK_THROWS_AS(e(0.0, x, 0.0, z), std::out_of_range);
}

TEST_CASE("malformed input is reported") {
    for (const char* bad : {"1 +", "foo(1)", "unknown", "(1", "max(1)", "1 2", "x_1", "3 $ 4"})
        CHECK_THROWS_AS(Expression::parse(bad), ParseError);
}
