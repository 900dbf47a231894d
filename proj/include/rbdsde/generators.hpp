#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbdsde/modulus.hpp"

namespace rbdsde {

using ScalarGenerator =
    std::function<double(double t, std::span<const double> x, double y, std::span<const double> z)>;
using VectorGenerator = std::function<void(double t, std::span<const double> x, double y,
                                           std::span<const double> z, std::span<double> out)>;

/// f(t, x, y, z) = y_part(y) + rest(t, x, z). Lets envelopes be evaluated in
/// O(1) from prefix/suffix extrema instead of a full grid scan.
struct SeparableForm {
    std::function<double(double y)> y_part;
    std::function<double(double t, std::span<const double> x, std::span<const double> z)> rest;
};

/// Driver f and backward-noise coefficient g with the structural constants
/// from the generator bounds: modulus rho, C = modulus.z_lipschitz and
/// alpha = modulus.alpha.
struct GeneratorSpec {
    ScalarGenerator f;
    VectorGenerator g;  // empty means g == 0
    std::size_t ell = 1;
    ModulusSpec modulus;
    bool g_depends_on_z = false;

    /// Linear growth |f(t, x, y, z)| <= phi(t) + K (|x| + |y| + |z|); K defaults to C.
    std::function<double(double t)> growth_phi;
    std::optional<double> growth_constant;

    std::optional<SeparableForm> separable;

    double C() const { return modulus.z_lipschitz; }
    double alpha() const { return modulus.alpha; }
    double growth_K() const { return growth_constant.value_or(C()); }
    double phi(double t) const { return growth_phi ? growth_phi(t) : 0.0; }
    bool has_g() const { return static_cast<bool>(g); }
};

/// Forward coefficients, generators, terminal value and obstacle.
struct ProblemSpec {
    std::string name;
    std::size_t d = 1;
    double horizon = 1.0;
    std::vector<double> x0;

    std::function<void(std::span<const double> x, std::span<double> out)> drift;      // d
    std::function<void(std::span<const double> x, std::span<double> out)> diffusion;  // d x d, row major
    GeneratorSpec gen;
    std::function<double(std::span<const double> x)> terminal;
    std::function<double(double t, std::span<const double> x)> obstacle;  // empty means none

    /// Constants of the standing assumptions: b, sigma, l are
    /// lipschitz_constant-Lipschitz; |h(t, x)| <= growth_c (1 + |x|^growth_p).
    double lipschitz_constant = 1.0;
    double obstacle_growth_c = 1.0;
    double obstacle_growth_p = 1.0;

    /// Half-width of the box around x0 used by sampled checks.
    double sample_radius = 3.0;

    /// Resolved catalog parameters (after overrides).
    std::map<std::string, double> parameters;

    bool has_obstacle() const { return static_cast<bool>(obstacle); }
    /// h(t, x), or -infinity without obstacle.
    double obstacle_at(double t, std::span<const double> x) const;
};

std::vector<std::string> catalog_names();
std::map<std::string, double> catalog_defaults(const std::string& name);

/// Catalog problem with parameter overrides. Unknown names or parameters
/// throw CatalogError.
ProblemSpec builtin_problem(const std::string& name,
                            const std::map<std::string, double>& overrides = {});

/// One-dimensional problem given by expression strings.
struct ExpressionProblem {
    std::string f = "0";
    std::string g;  // empty: g == 0
    std::string terminal = "x";
    std::string obstacle;  // empty: no obstacle
    std::string drift = "0";
    std::string diffusion = "1";
    double x0 = 0.0;
    double horizon = 1.0;
    ModulusSpec modulus = ModulusSpec::lipschitz(1.0);
    std::map<std::string, double> parameters;
    double lipschitz_constant = 1.0;
    double obstacle_growth_c = 1.0;
    double obstacle_growth_p = 1.0;
};

/// Throws ParseError on malformed text or on references to x2.., z2...
ProblemSpec expression_problem(const ExpressionProblem& def);

// ---------------------------------------------------------------------------
// Lipschitz envelopes

enum class EnvelopeDirection { Lower, Upper };

/// Uniform u-grid on [-range, range] standing in for the rationals.
struct EnvelopeGrid {
    double range = 50.0;
    double step = 1e-3;
};

struct EnvelopeValue {
    double value = 0.0;
    double argmin = 0.0;     // the optimising u
    bool truncated = false;  // optimum sits on the grid boundary
};

/// lower_n(t,x,y,z) = inf_u { f(t,x,u,z) + n |y - u| },
/// upper_n(t,x,y,z) = sup_u { f(t,x,u,z) - n |y - u| },
/// with u ranging over the grid plus the point y itself (so the sandwich
/// lower_n <= f <= upper_n holds exactly).
class EnvelopeApproximant {
public:
    EnvelopeApproximant(GeneratorSpec base, int n, EnvelopeDirection direction, EnvelopeGrid grid = {});

    int n() const { return n_; }
    EnvelopeDirection direction() const { return direction_; }
    const EnvelopeGrid& grid() const { return grid_; }
    const GeneratorSpec& base() const { return base_; }

    /// Throws RangeError for |y| > range.
    EnvelopeValue evaluate(double t, std::span<const double> x, double y, std::span<const double> z) const;
    double operator()(double t, std::span<const double> x, double y, std::span<const double> z) const {
        return evaluate(t, x, y, z).value;
    }
    /// Full scan over the grid, independent of the separable fast path.
    EnvelopeValue reference(double t, std::span<const double> x, double y, std::span<const double> z) const;

    /// Restriction error (n + L_loc) * step, with L_loc the local y-Lipschitz
    /// constant of f estimated on the grid around y.
    double grid_tol(double t, std::span<const double> x, double y, std::span<const double> z) const;

    /// Generator with f replaced by the envelope and g unchanged.
    GeneratorSpec as_generator() const;

private:
    double u(std::size_t j) const { return -grid_.range + static_cast<double>(j) * grid_.step; }
    std::size_t num_points() const { return points_; }

    GeneratorSpec base_;
    int n_;
    EnvelopeDirection direction_;
    EnvelopeGrid grid_;
    std::size_t points_;
    // Separable fast path: prefix extrema of p(u_j) -/+ n u_j and suffix extrema
    // of p(u_j) +/- n u_j, with the indices attaining them.
    std::vector<double> prefix_, suffix_;
    std::vector<std::size_t> prefix_at_, suffix_at_;
};

/// Throws std::invalid_argument for n < ceil(C).
EnvelopeApproximant lipschitz_envelope(const GeneratorSpec& base, int n, EnvelopeDirection direction,
                                       EnvelopeGrid grid = {});

struct EnvelopeSample {
    double t = 0.0;
    std::vector<double> x;
    double y = 0.0;
    std::vector<double> z;
};

/// Uniform samples: t in [0, T], x in the problem's box, y in [-y_range, y_range],
/// z standard normal.
std::vector<EnvelopeSample> sample_arguments(const ProblemSpec& problem, std::size_t count,
                                             double y_range, std::uint64_t seed);

struct EnvelopePropertyReport {
    std::vector<int> n_values;
    std::size_t samples = 0;
    std::size_t truncated = 0;  // evaluations whose optimum hit the grid boundary
    bool range_error = false;

    bool sandwich = true;      // (i)
    bool monotone = true;      // (ii)
    bool growth = true;        // (iii)
    bool lipschitz_xy = true;  // (iv)
    bool lipschitz_z = true;   // (v)
    bool convergence = true;   // (vi)
    bool matches_reference = true;

    double worst_sandwich = 0.0;
    double worst_monotone = 0.0;
    double worst_growth = 0.0;
    double worst_lipschitz_xy = 0.0;
    double worst_lipschitz_z = 0.0;
    double worst_reference = 0.0;
    /// max over samples of |lower_n - f| and |upper_n - f| per n.
    std::vector<double> lower_error, upper_error;

    bool properties() const {
        return sandwich && monotone && growth && lipschitz_xy && lipschitz_z && convergence;
    }
    bool all() const { return properties() && matches_reference && !range_error; }
};

/// Checks properties (i)-(vi) for lower and upper envelopes at every n
/// (increasing, at least two values) on the given samples. Pairs for the
/// Lipschitz checks perturb (x, y), resp. z, of each sample. Samples whose
/// evaluation is truncated by the grid are excluded from the property
/// checks and reported through range_error instead. reference_stride > 0
/// compares every k-th sample against the full-scan oracle.
EnvelopePropertyReport envelope_property_check(const GeneratorSpec& base, std::span<const int> n_values,
                                               std::span<const EnvelopeSample> samples,
                                               EnvelopeGrid grid = {}, std::size_t reference_stride = 0,
                                               std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Sampled admissibility checks

struct GeneratorBoundReport {
    std::size_t samples = 0;
    double worst_f_excess = 0.0;  // max of |df|^2 - rho(|dy|^2) - C |dz|^2
    double worst_g_excess = 0.0;  // max of |dg|^2 - rho(|dy|^2) - alpha |dz|^2
    bool f_ok = true;
    bool g_ok = true;
    bool passed() const { return f_ok && g_ok; }
};

/// Witness for the declared modulus bounds on sampled quadruples.
GeneratorBoundReport check_generator_bounds(const ProblemSpec& problem, std::size_t samples, double tol,
                                            std::uint64_t seed);

struct ProblemInvariantReport {
    bool obstacle_below_terminal = true;  // h(T, x) <= l(x)
    bool coefficients_lipschitz = true;   // b, sigma, l
    bool obstacle_growth = true;          // |h| <= c (1 + |x|^p)
    bool f_growth = true;                 // |f(t, 0, y, 0)| <= phi(t) + C |y|
    bool g_z_free = true;                 // g constant in z when declared z-free
    bool all() const {
        return obstacle_below_terminal && coefficients_lipschitz && obstacle_growth && f_growth && g_z_free;
    }
};

ProblemInvariantReport check_problem_invariants(const ProblemSpec& problem, std::size_t samples,
                                                std::uint64_t seed, double tol = 1e-12);

}  // namespace rbdsde
