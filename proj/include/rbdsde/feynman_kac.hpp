#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rbdsde/generators.hpp"
#include "rbdsde/paths.hpp"
#include "rbdsde/rbdsde.hpp"
#include "rbdsde/regression.hpp"

namespace rbdsde {

/// u(t, x) = Y_t^{t,x} on a space-time grid, all points driven by the same
/// noise ensemble (common random numbers, one realised B path).
struct FieldSample {
    std::vector<std::vector<double>> space_grid;
    std::vector<std::size_t> time_nodes;  // grid node indices
    std::vector<double> times;
    /// values[a][j] = u(times[a], space_grid[j]); stderr likewise.
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> std_error;
    std::vector<std::vector<std::size_t>> iterations;
    std::uint64_t seed = 0;
    std::uint64_t b_index = 0;
    bool converged = true;  // every Picard run converged

    double at(std::size_t a, std::size_t j) const { return values.at(a).at(j); }
};

/// Runs simulate_forward + picard_solve at every grid point. Terminal nodes
/// are set to l(x) exactly. The standard error of u(t, x) is that of the
/// one-step-ahead mean of Y. Throws UnsupportedProblemError for a
/// z-dependent g.
FieldSample evaluate_u_field(const ProblemSpec& problem, const std::vector<std::vector<double>>& space_grid,
                             const std::vector<std::size_t>& time_nodes, const NoiseEnsemble& noise,
                             const RegressionBasis& basis, const SolverConfig& cfg);

/// eta(t, x, y) = y + 1/2 int_t^T <g, D_y g>(s, x, eta) ds + int_t^T g(s, x, eta) dB_s (backward)
/// sampled on a (time node, x point, y point) grid for the realised B path,
/// together with its y-inverse epsilon.
class DossTransform {
public:
    DossTransform(GeneratorSpec gen, TimeGrid grid, std::vector<double> b_increments,
                  std::vector<std::vector<double>> x_points, std::vector<double> y_points, double h_y,
                  std::vector<double> eta);

    const TimeGrid& grid() const { return grid_; }
    const std::vector<std::vector<double>>& x_points() const { return x_; }
    const std::vector<double>& y_points() const { return y_; }
    double h_y() const { return h_y_; }

    double eta(std::size_t node, std::size_t j, std::size_t m) const {
        return eta_[(node * x_.size() + j) * y_.size() + m];
    }
    /// epsilon(t_node, x_j, v): composition of the second-order local
    /// inverses of the Euler steps from `node` to the terminal node.
    double epsilon(std::size_t node, std::size_t j, double v) const;
    /// max over (x, y) of |epsilon(t, x, eta(t, x, y)) - y| at a node.
    double inverse_error(std::size_t node) const;

private:
    GeneratorSpec gen_;
    TimeGrid grid_;
    std::vector<double> b_;
    std::vector<std::vector<double>> x_;
    std::vector<double> y_;
    double h_y_;
    std::vector<double> eta_;
};

/// Backward Euler march from eta(T) = y, with g and D_y g anchored at the
/// later node. D_y g by central differences with step h_y (0 picks 1e-4
/// times the y range). The B increments are taken from `noise`. Throws
/// UnsupportedProblemError for a z-dependent g and StepSizeError when eta
/// stops being strictly increasing in y.
DossTransform solve_doss_eta(const GeneratorSpec& gen, const NoiseEnsemble& noise,
                             std::vector<std::vector<double>> x_points, std::vector<double> y_points,
                             double h_y = 0.0);

/// Mean over B realisations of inverse_error at node 0 on the grid with
/// `steps` steps and on its refinement with 2 steps per step (same B paths).
struct DossConvergenceReport {
    double coarse_error = 0.0;
    double fine_error = 0.0;
    double ratio = 0.0;
};

DossConvergenceReport doss_inverse_convergence(const GeneratorSpec& gen, double horizon, std::size_t steps,
                                               const std::vector<std::vector<double>>& x_points,
                                               const std::vector<double>& y_points, std::size_t b_paths,
                                               std::uint64_t seed);

/// u from picard_solve with f replaced by its lower / upper Lipschitz
/// envelope for each n.
struct MonotoneFieldReport {
    std::vector<int> n_values;
    FieldSample u;
    std::vector<FieldSample> lower, upper;
    std::size_t monotonicity_violations = 0;  // beyond 3 combined stderr
    std::vector<double> bracket_width;        // max over the grid of upper - lower, per n
    std::size_t width_violations = 0;         // width growing in n beyond 3 combined stderr
    std::size_t bracket_violations = 0;       // u outside [lower, upper] beyond 3 stderr (largest n)
    bool ok() const { return monotonicity_violations == 0 && width_violations == 0 && bracket_violations == 0; }
};

MonotoneFieldReport monotone_field_sequence(const ProblemSpec& problem, const std::vector<int>& n_values,
                                            const std::vector<std::vector<double>>& space_grid,
                                            const std::vector<std::size_t>& time_nodes, const NoiseEnsemble& noise,
                                            const RegressionBasis& basis, const SolverConfig& cfg,
                                            EnvelopeGrid envelope_grid = {});

}  // namespace rbdsde
