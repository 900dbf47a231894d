#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rbdsde/forward.hpp"
#include "rbdsde/generators.hpp"
#include "rbdsde/modulus.hpp"
#include "rbdsde/paths.hpp"
#include "rbdsde/regression.hpp"

namespace rbdsde {

/// Z_i from E_i[Y_{i+1} dW_i] / dt (Regression) or from the centred
/// increment E_i[(Y_{i+1} - E_i[Y_{i+1}]) dW_i] / dt (FiniteIncrement), which
/// has the same conditional mean and a smaller variance.
enum class ZScheme { Regression, FiniteIncrement };

std::string to_string(ZScheme scheme);
ZScheme z_scheme_from_string(const std::string& name);

/// g is always taken at the right endpoint and the obstacle is reflected
/// after the conditional expectation; neither is configurable.
struct SolverConfig {
    double picard_tol = 1e-4;
    int picard_max_iter = 50;
    double ridge = 1e-8;
    ZScheme z_scheme = ZScheme::Regression;

    /// Throws std::invalid_argument unless picard_tol > 0, picard_max_iter >= 1, ridge >= 0.
    void validate() const;
    bool operator==(const SolverConfig&) const = default;
};

/// Discrete (Y, Z, K) together with the pre-reflection values and the
/// obstacle on every path and node. Nodes before the start index carry the
/// start value of Y and zero Z, K.
struct SolutionTriple {
    ProcessSample Y;
    ProcessSample Z;
    ProcessSample K;
    ProcessSample Y_hat;  // conditional expectation before reflection
    ProcessSample S;      // obstacle, -infinity without one
    std::size_t start_index = 0;
    std::map<std::string, double> diagnostics;
};

/// Regressions depend only on the forward sample, so Picard iterations share
/// them through a cache bound to one ForwardEnsemble.
class RegressionCache {
public:
    RegressionCache(const ForwardEnsemble& forward, RegressionBasis basis, double ridge);
    const Regression& at(std::size_t node) const;
    const ForwardEnsemble& forward() const { return *forward_; }
    const RegressionBasis& basis() const { return basis_; }
    double ridge() const { return ridge_; }

private:
    const ForwardEnsemble* forward_;
    RegressionBasis basis_;
    double ridge_;
    mutable std::vector<std::unique_ptr<Regression>> steps_;
};

/// One sweep of the backward scheme with y frozen at `frozen_y`:
///   Z_i = E_i[Y_{i+1} dW_i] / dt_i,
///   Y^_i = E_i[Y_{i+1} + f(t_i, X_i, y_i, Z_i) dt_i + g(t_{i+1}, X_{i+1}, y_{i+1}, Z_i) dB_i],
///   Y_i = max(Y^_i, S_i), K_{i+1} - K_i = Y_i - Y^_i,
/// from Y_N = l(X_N) down to the start index of the forward ensemble.
/// Throws GeneratorEvaluationError on a non-finite f or g.
SolutionTriple solve_frozen_rbdsde(const ProblemSpec& problem, const ProcessSample& frozen_y,
                                   const ForwardEnsemble& forward, const NoiseEnsemble& noise,
                                   const RegressionBasis& basis, const SolverConfig& cfg,
                                   const RegressionCache* cache = nullptr);

/// Per-node summary of one iterate, the rows of the solution CSV.
struct NodeSummary {
    double t = 0.0;
    double mean_Y = 0.0;
    double mean_Z_norm = 0.0;
    double mean_K = 0.0;
    double gap = 0.0;                // mean |Y^n_i - Y^{n-1}_i|^2
    double skorokhod_partial = 0.0;  // mean sum_{j < i} (Y_j - S_j)(K_{j+1} - K_j)
};

struct PicardResult {
    SolutionTriple solution;
    std::size_t iterations = 0;
    bool converged = false;
    /// gaps[j] = max over nodes of mean |Y^{j+1} - Y^j|^2.
    std::vector<double> gaps;
    /// Node-wise gaps and their Monte Carlo standard errors, per iteration.
    std::vector<std::vector<double>> node_gaps;
    std::vector<std::vector<double>> node_gap_stderr;
    std::vector<std::vector<NodeSummary>> trace;
};

/// Picard iteration from Y^0 = 0 until the gap drops below picard_tol or
/// picard_max_iter sweeps have run (converged = false).
PicardResult picard_solve(const ProblemSpec& problem, const ForwardEnsemble& forward, const NoiseEnsemble& noise,
                          const RegressionBasis& basis, const SolverConfig& cfg);

/// Mean over paths of sum_i (Y_i - S_i)(K_{i+1} - K_i); terms with no push
/// are skipped, so an infinite obstacle away from the contact set is harmless.
double skorokhod_residual(const ProcessSample& Y, const ProcessSample& K, const ProcessSample& S);
double skorokhod_residual(const SolutionTriple& solution);

struct InvariantCounts {
    std::size_t reflection = 0;    // Y_i < S_i - 1e-12
    std::size_t minimal_push = 0;  // K_{i+1} > K_i although Y^_i >= S_i
    std::size_t monotone_k = 0;    // K_{i+1} < K_i
};

InvariantCounts count_invariant_violations(const SolutionTriple& solution, double tol = 1e-12);

struct ComparisonReport {
    std::vector<double> mean_violation;  // per node, mean (Y1 - Y2)^+
    std::vector<double> stderr_violation;
    double max_mean_violation = 0.0;
    double violation_fraction = 0.0;  // paths with Y1 > Y2 + 1e-12 at some node
    bool within_tolerance = true;     // mean <= 3 stderr at every node
    std::size_t iterations_1 = 0, iterations_2 = 0;
    double y0_1 = 0.0, y0_2 = 0.0;
};

/// Solves both problems on the same forward sample and noise. The ordering
/// xi1 <= xi2, S1 <= S2 (on the forward sample), f1 <= f2 and g1 = g2 (on
/// `spot_samples` sampled arguments) is spot-checked first; a failure throws
/// SetupError.
ComparisonReport comparison_experiment(const ProblemSpec& problem1, const ProblemSpec& problem2,
                                       const ForwardEnsemble& forward, const NoiseEnsemble& noise,
                                       const RegressionBasis& basis, const SolverConfig& cfg,
                                       std::size_t spot_samples = 1000, std::uint64_t seed = 1);

/// Ordered pairs (lower, upper) built on lipschitz-linear with a z-free
/// generator: terminal-shift (l + 1), obstacle-shift (h + 0.5, with the
/// terminal raised to max(l, h + 0.5) so that h(T) <= l still holds) and
/// generator-shift (f + 0.2).
struct ComparisonFixture {
    std::string name;
    ProblemSpec lower;
    ProblemSpec upper;
};

std::vector<ComparisonFixture> comparison_fixtures();

/// mu^1 = c e^{cT} (1 + E|xi|^2 + E sup|S|^2 + int E|f(s, X_s, 0, 0)|^2 ds
/// + int E|g(s, X_s, 0, 0)|^2 ds) measured on the forward sample.
struct MomentBound {
    double terminal = 0.0;
    double obstacle = 0.0;
    double f_zero = 0.0;
    double g_zero = 0.0;
    double mu = 0.0;
};

MomentBound measure_moment_bound(const ProblemSpec& problem, const ForwardEnsemble& forward, double c);

struct GapMajorantEntry {
    std::size_t n = 0;              // compares gap n (Y^{n+1} vs Y^n) with phi_{n-1}
    bool within = true;             // gap <= phi_{n-1} + 3 stderr at every node
    double worst_excess = 0.0;      // max of gap - phi_{n-1}
    std::vector<std::size_t> tolerance_bound;  // nodes where only the tolerance covers the gap
    std::vector<std::size_t> violations;
};

struct GapMajorantReport {
    std::vector<GapMajorantEntry> entries;
    bool all_within() const;
};

/// Informative check of the iterate gaps against the majorant sequence; the
/// majorant must live on the same grid as the gaps.
GapMajorantReport picard_gap_vs_majorant(const PicardResult& result, const MajorantSequence& majorant);

}  // namespace rbdsde
