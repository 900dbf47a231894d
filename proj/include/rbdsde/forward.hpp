#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rbdsde/generators.hpp"
#include "rbdsde/paths.hpp"

namespace rbdsde {

/// Euler paths of X^{t,x}; nodes before the start index hold x.
struct ForwardEnsemble {
    double start_time = 0.0;
    std::size_t start_index = 0;
    std::vector<double> start_point;
    ProcessSample paths;
};

/// X_{i+1} = X_i + b(X_i) dt_i + sigma(X_i) dW_i for i >= index(t).
/// Throws std::invalid_argument when t is not a grid node or x has the
/// wrong dimension.
ForwardEnsemble simulate_forward(const ProblemSpec& problem, double t, std::span<const double> x,
                                 const NoiseEnsemble& noise);

struct FlowContinuityReport {
    double estimate = 0.0;  // mean over paths of sup_s |X^{t,x}_s - X^{t',x'}_s|^p
    double std_error = 0.0;
    double scale = 0.0;     // |t - t'|^{p/2} + |x - x'|^p
    double ratio = 0.0;     // estimate / scale (0 when scale = 0)
};

/// Both flows are driven by the same noise (common random numbers).
/// p must be a positive even integer.
FlowContinuityReport flow_continuity_test(const ProblemSpec& problem, double t, std::span<const double> x,
                                          double t2, std::span<const double> x2, int p,
                                          const NoiseEnsemble& noise);

enum class FlowShift { Spatial, Temporal };

struct FlowLadderReport {
    std::vector<double> perturbation;
    std::vector<FlowContinuityReport> points;
    double slope = 0.0;   // least-squares slope of log estimate against log perturbation
    double spread = 0.0;  // max ratio / min ratio
    bool stable = false;  // spread <= spread_limit
};

/// Perturbs (t, x) by each size: along the first coordinate of x for a
/// spatial shift, forward in time for a temporal one (sizes must then be
/// multiples of the grid step).
FlowLadderReport flow_continuity_ladder(const ProblemSpec& problem, double t, std::span<const double> x,
                                        FlowShift shift, std::span<const double> sizes, int p,
                                        const NoiseEnsemble& noise, double spread_limit = 4.0);

struct StrongConvergenceReport {
    std::vector<std::size_t> steps;
    std::vector<double> rms_error;  // sqrt(mean |X_T^coarse - X_T^reference|^2)
    double slope = 0.0;             // against the step size, log-log
};

/// Euler on grids obtained by coarsening the reference noise by each factor,
/// compared at T with Euler on the reference grid itself.
StrongConvergenceReport strong_convergence(const ProblemSpec& problem, std::span<const double> x,
                                           const NoiseEnsemble& reference,
                                           std::span<const std::size_t> factors);

/// Least-squares slope of log(v) against log(u).
double log_log_slope(std::span<const double> u, std::span<const double> v);

}  // namespace rbdsde
