#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbdsde/paths.hpp"

namespace rbdsde {

enum class ModulusVariant { Lipschitz, LogModulus, LogLogModulus, Tabulated };

/// Concave modulus rho(t, u) replacing the Lipschitz constant in y, together
/// with the z-constants C and alpha that accompany it in the generator bounds.
///
/// Built-in variants are time independent:
///   Lipschitz      rho(u) = c * u
///   LogModulus     rho(u) = u ln(1/u) on [0, delta], affine C^1 extension beyond
///   LogLogModulus  rho(u) = u ln(1/u) ln(ln(1/u)) on [0, delta], affine extension
///   Tabulated      piecewise-linear interpolation of (u, rho) pairs starting at u = 0
class ModulusSpec {
public:
    static ModulusSpec lipschitz(double slope);
    static ModulusSpec log_modulus(double delta = kDefaultLogDelta);
    static ModulusSpec loglog_modulus(double delta = kDefaultLogLogDelta);
    static ModulusSpec tabulated(std::vector<std::pair<double, double>> table);
    /// Tabulates fn on the given abscissae (u = 0 is prepended when missing).
    static ModulusSpec tabulate(const std::function<double(double)>& fn,
                                std::span<const double> abscissae);

    static const double kDefaultLogDelta;     // e^-2
    static const double kDefaultLogLogDelta;  // e^-3

    ModulusVariant variant() const { return variant_; }
    /// Slope for Lipschitz, delta for the logarithmic variants.
    double parameter() const { return parameter_; }
    const std::vector<std::pair<double, double>>& table() const { return table_; }

    /// Slope of the affine extension beyond delta (left derivative at delta).
    double extension_slope() const;

    double z_lipschitz = 1.0;
    double alpha = 0.5;

    /// rho(t, u); throws std::invalid_argument for u < 0.
    double operator()(double t, double u) const;

    std::string describe() const;

private:
    ModulusVariant variant_ = ModulusVariant::Lipschitz;
    double parameter_ = 1.0;
    std::vector<std::pair<double, double>> table_;
};

double eval_modulus(const ModulusSpec& rho, double t, double u);

/// Two-column CSV (u, rho), optional header line.
ModulusSpec load_tabulated_modulus(std::istream& in);

struct AxiomReport {
    bool zero_at_zero = false;
    bool monotone = false;
    bool concave = false;
    bool integrable = false;
    /// Largest concavity defect slope(u2,u3) - slope(u1,u2) seen.
    double worst_concavity_defect = 0.0;
    bool all() const { return zero_at_zero && monotone && concave && integrable; }
};

/// Sampled checks of the modulus axioms on [0, u_max]: zero at zero,
/// monotone, concave (secant-slope test over consecutive and random triples),
/// and finite time integral over [0, horizon].
AxiomReport verify_modulus_axioms(const ModulusSpec& rho, int samples, double tol,
                                  double horizon = 1.0, double u_max = 10.0);

enum class Verdict { Passes, Fails, Inconclusive };
std::string to_string(Verdict v);

struct UniquenessOptions {
    /// Upper limit of the Osgood integral I(eps) = int_eps^u0 du / rho(u).
    double u0 = 1.0;
    /// Number of trailing ladder intervals examined by both tests.
    std::size_t tail = 3;
    /// Osgood test: per-decade increments of I must stay positive and shrink
    /// by no more than this factor from one interval to the next.
    double increment_ratio = 0.85;
    /// Shooting test: u(0) must shrink at least by this factor per decade of eps.
    double shrink_per_decade = 0.99;
};

struct UniquenessReport {
    Verdict verdict = Verdict::Inconclusive;
    bool osgood_diverges = false;
    bool shooting_vanishes = false;
    std::vector<double> eps;
    std::vector<double> osgood_integral;
    std::vector<double> shooting_start;  // u(0) from u(T) = eps
    std::string note;
};

/// Numerical evidence that u' = -M rho(t, u), u(T) = 0 only has the zero
/// solution: (a) Osgood divergence of int du / rho near 0 and (b) backward
/// shooting from u(T) = eps with u(0) -> 0 as eps -> 0. Both must pass for
/// Passes, both fail for Fails, anything else is Inconclusive.
UniquenessReport condition_a_uniqueness_check(const ModulusSpec& rho, double M, double horizon,
                                              std::span<const double> eps_ladder,
                                              const UniquenessOptions& options = {});

/// phi_0(t) = M int_t^T rho(s, M1) ds, phi_{n+1}(t) = M int_t^T rho(s, phi_n(s)) ds,
/// by backward composite trapezoid on the grid nodes.
class MajorantSequence {
public:
    MajorantSequence(TimeGrid grid, double M, double M1, std::vector<std::vector<double>> phi);

    const TimeGrid& grid() const { return grid_; }
    double M() const { return M_; }
    double M1() const { return M1_; }
    std::size_t size() const { return phi_.size(); }
    std::span<const double> phi(std::size_t n) const { return phi_.at(n); }
    /// phi_n at node i; indices past the computed range return the last member.
    double at(std::size_t n, std::size_t i) const;

    /// phi_{n+1} <= phi_n at every node for every computed n.
    bool non_increasing(double tol = 0.0) const;
    /// phi_0 <= M1 everywhere, under which the sequence is provably non-increasing.
    bool within_proof_regime() const;

private:
    TimeGrid grid_;
    double M_;
    double M1_;
    std::vector<std::vector<double>> phi_;
};

/// Builds phi_0 .. phi_{n_max}; stops early once sup_t phi_n < tol.
MajorantSequence majorant_sequence(const ModulusSpec& rho, double M, double M1,
                                   const TimeGrid& grid, std::size_t n_max, double tol = 1e-300);

/// Budget mu_0^p for segment p (1-based) given the previous breakpoint T_{p-1}.
using SegmentBudget = std::function<double(std::size_t p, double previous_breakpoint)>;

/// Backward breakpoints T = T_0 > T_1 > ... > T_p = 0 with
/// int_{T_p}^{T_{p-1}} rho(s, 2 mu_0^p) ds = mu_0^p / M.
/// Throws NonTerminationError when more than max_segments are needed.
std::vector<double> horizon_partition(const ModulusSpec& rho, double M, const SegmentBudget& budget,
                                      double horizon, std::size_t max_segments = 100000);

/// M = max{ c e^{cT}, ((1 - alpha)/C + 1) e^{CT/(1 - alpha)} }, saturating at DBL_MAX.
double majorant_constant(double c, double C, double alpha, double horizon);

}  // namespace rbdsde
