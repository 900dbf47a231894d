#include "rbdsde/feynman_kac.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rbdsde/errors.hpp"
#include "rbdsde/forward.hpp"
#include "rbdsde/parallel.hpp"

namespace rbdsde {

FieldSample evaluate_u_field(const ProblemSpec& problem, const std::vector<std::vector<double>>& space_grid,
                             const std::vector<std::size_t>& time_nodes, const NoiseEnsemble& noise,
                             const RegressionBasis& basis, const SolverConfig& cfg) {
    if (problem.gen.g_depends_on_z)
        throw UnsupportedProblemError("the field u(t, x) = Y_t^{t,x} needs a z-free g (problem '" + problem.name +
                                      "')");
    const TimeGrid& grid = noise.grid();
    const std::size_t N = grid.num_steps(), M = noise.num_paths();
    for (std::size_t node : time_nodes)
        if (node > N) throw std::invalid_argument("field time node outside the grid");
    for (const auto& x : space_grid)
        if (x.size() != problem.d) throw std::invalid_argument("field point has the wrong dimension");

    FieldSample field;
    field.space_grid = space_grid;
    field.time_nodes = time_nodes;
    field.seed = noise.seed();
    field.b_index = noise.b_index();
    for (std::size_t node : time_nodes) {
        field.times.push_back(grid.node(node));
        std::vector<double> row, errs;
        std::vector<std::size_t> its;
        for (const auto& x : space_grid) {
            if (node == N) {
                row.push_back(problem.terminal(x));
                errs.push_back(0.0);
                its.push_back(0);
                continue;
            }
            const ForwardEnsemble forward = simulate_forward(problem, grid.node(node), x, noise);
            const PicardResult r = picard_solve(problem, forward, noise, basis, cfg);
            const ProcessSample& Y = r.solution.Y;
            row.push_back(Y(0, node));
            const double mean = Y.mean_at(node + 1);
            const double ss = block_sum(M, [&](std::size_t k) {
                const double e = Y(k, node + 1) - mean;
                return e * e;
            });
            errs.push_back(M > 1 ? std::sqrt(ss / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0);
            its.push_back(r.iterations);
            field.converged = field.converged && r.converged;
        }
        field.values.push_back(std::move(row));
        field.std_error.push_back(std::move(errs));
        field.iterations.push_back(std::move(its));
    }
    return field;
}

namespace {

struct GStep {
    double g_db = 0.0;     // <g, dB>
    double dg_db = 0.0;    // <D_y g, dB>
    double g_dg = 0.0;     // <g, D_y g>
};

GStep g_terms(const GeneratorSpec& gen, double t, std::span<const double> x, double v, double h,
              std::span<const double> db, std::vector<double>& g0, std::vector<double>& gp,
              std::vector<double>& gm) {
    const std::vector<double> z(x.size(), 0.0);
    gen.g(t, x, v, z, g0);
    gen.g(t, x, v + h, z, gp);
    gen.g(t, x, v - h, z, gm);
    GStep s;
    for (std::size_t l = 0; l < db.size(); ++l) {
        const double dg = (gp[l] - gm[l]) / (2.0 * h);
        s.g_db += g0[l] * db[l];
        s.dg_db += dg * db[l];
        s.g_dg += g0[l] * dg;
    }
    return s;
}

}  // namespace

DossTransform::DossTransform(GeneratorSpec gen, TimeGrid grid, std::vector<double> b_increments,
                             std::vector<std::vector<double>> x_points, std::vector<double> y_points, double h_y,
                             std::vector<double> eta)
    : gen_(std::move(gen)),
      grid_(std::move(grid)),
      b_(std::move(b_increments)),
      x_(std::move(x_points)),
      y_(std::move(y_points)),
      h_y_(h_y),
      eta_(std::move(eta)) {}

double DossTransform::epsilon(std::size_t node, std::size_t j, double v) const {
    if (!gen_.has_g()) return v;
    const std::size_t ell = gen_.ell;
    std::vector<double> g0(ell), gp(ell), gm(ell);
    for (std::size_t i = node; i < grid_.num_steps(); ++i) {
        const std::span<const double> db{b_.data() + i * ell, ell};
        const GStep s = g_terms(gen_, grid_.node(i + 1), x_[j], v, h_y_, db, g0, gp, gm);
        v = v - s.g_db + s.dg_db * s.g_db - 0.5 * s.g_dg * grid_.dt(i);
    }
    return v;
}

double DossTransform::inverse_error(std::size_t node) const {
    double worst = 0.0;
    for (std::size_t j = 0; j < x_.size(); ++j)
        for (std::size_t m = 0; m < y_.size(); ++m)
            worst = std::max(worst, std::abs(epsilon(node, j, eta(node, j, m)) - y_[m]));
    return worst;
}

DossTransform solve_doss_eta(const GeneratorSpec& gen, const NoiseEnsemble& noise,
                             std::vector<std::vector<double>> x_points, std::vector<double> y_points, double h_y) {
    if (gen.g_depends_on_z) throw UnsupportedProblemError("the Doss transform needs a z-free g");
    if (y_points.empty() || x_points.empty()) throw std::invalid_argument("empty Doss grid");
    if (!std::ranges::is_sorted(y_points) ||
        std::adjacent_find(y_points.begin(), y_points.end()) != y_points.end())
        throw std::invalid_argument("y points must be strictly increasing");
    if (gen.has_g() && noise.b_dim() != gen.ell)
        throw std::invalid_argument("backward noise dimension does not match g");
    if (h_y <= 0.0) h_y = 1e-4 * std::max(1.0, y_points.back() - y_points.front());

    const TimeGrid& grid = noise.grid();
    const std::size_t N = grid.num_steps(), nx = x_points.size(), ny = y_points.size(), ell = gen.ell;
    std::vector<double> eta((N + 1) * nx * ny);
    const auto at = [&](std::size_t i, std::size_t j, std::size_t m) { return (i * nx + j) * ny + m; };
    std::vector<double> g0(ell), gp(ell), gm(ell);
    for (std::size_t j = 0; j < nx; ++j)
        for (std::size_t m = 0; m < ny; ++m) {
            double v = y_points[m];
            eta[at(N, j, m)] = v;
            for (std::size_t i = N; i-- > 0;) {
                if (gen.has_g()) {
                    const GStep s = g_terms(gen, grid.node(i + 1), x_points[j], v, h_y, noise.b_step(i), g0, gp, gm);
                    v += 0.5 * s.g_dg * grid.dt(i) + s.g_db;
                }
                eta[at(i, j, m)] = v;
            }
        }
    for (std::size_t i = 0; i <= N; ++i)
        for (std::size_t j = 0; j < nx; ++j)
            for (std::size_t m = 0; m + 1 < ny; ++m)
                if (!(eta[at(i, j, m + 1)] > eta[at(i, j, m)]))
                    throw StepSizeError("eta is not increasing in y; refine the time grid", i);

    std::vector<double> b(noise.b_increments().begin(), noise.b_increments().end());
    return DossTransform(gen, grid, std::move(b), std::move(x_points), std::move(y_points), h_y, std::move(eta));
}

DossConvergenceReport doss_inverse_convergence(const GeneratorSpec& gen, double horizon, std::size_t steps,
                                               const std::vector<std::vector<double>>& x_points,
                                               const std::vector<double>& y_points, std::size_t b_paths,
                                               std::uint64_t seed) {
    if (b_paths == 0) throw std::invalid_argument("need at least one B path");
    const TimeGrid fine_grid = build_grid(horizon, static_cast<long>(2 * steps));
    DossConvergenceReport rep;
    for (std::size_t b = 0; b < b_paths; ++b) {
        const NoiseEnsemble fine = sample_noise(fine_grid, 1, 1, static_cast<long>(gen.ell), seed, b);
        const NoiseEnsemble coarse = coarsen(fine, 2);
        rep.coarse_error += solve_doss_eta(gen, coarse, x_points, y_points).inverse_error(0);
        rep.fine_error += solve_doss_eta(gen, fine, x_points, y_points).inverse_error(0);
    }
    rep.coarse_error /= static_cast<double>(b_paths);
    rep.fine_error /= static_cast<double>(b_paths);
    rep.ratio = rep.fine_error > 0.0 ? rep.coarse_error / rep.fine_error : 0.0;
    return rep;
}

namespace {

ProblemSpec with_envelope(const ProblemSpec& problem, int n, EnvelopeDirection direction, EnvelopeGrid grid) {
    ProblemSpec p = problem;
    p.gen = lipschitz_envelope(problem.gen, n, direction, grid).as_generator();
    return p;
}

double combined(double a, double b) { return std::sqrt(a * a + b * b); }

}  // namespace

MonotoneFieldReport monotone_field_sequence(const ProblemSpec& problem, const std::vector<int>& n_values,
                                            const std::vector<std::vector<double>>& space_grid,
                                            const std::vector<std::size_t>& time_nodes, const NoiseEnsemble& noise,
                                            const RegressionBasis& basis, const SolverConfig& cfg,
                                            EnvelopeGrid envelope_grid) {
    if (n_values.empty()) throw std::invalid_argument("need at least one envelope index");
    for (std::size_t a = 1; a < n_values.size(); ++a)
        if (n_values[a] <= n_values[a - 1]) throw std::invalid_argument("envelope indices must increase");

    MonotoneFieldReport rep;
    rep.n_values = n_values;
    rep.u = evaluate_u_field(problem, space_grid, time_nodes, noise, basis, cfg);
    for (int n : n_values) {
        rep.lower.push_back(evaluate_u_field(with_envelope(problem, n, EnvelopeDirection::Lower, envelope_grid),
                                             space_grid, time_nodes, noise, basis, cfg));
        rep.upper.push_back(evaluate_u_field(with_envelope(problem, n, EnvelopeDirection::Upper, envelope_grid),
                                             space_grid, time_nodes, noise, basis, cfg));
    }

    const std::size_t rows = time_nodes.size(), cols = space_grid.size();
    for (std::size_t q = 0; q < n_values.size(); ++q) {
        const auto& lo = rep.lower[q];
        const auto& up = rep.upper[q];
        double width = 0.0;
        for (std::size_t a = 0; a < rows; ++a)
            for (std::size_t j = 0; j < cols; ++j) {
                width = std::max(width, up.values[a][j] - lo.values[a][j]);
                if (q == 0) continue;
                const auto& plo = rep.lower[q - 1];
                const auto& pup = rep.upper[q - 1];
                if (lo.values[a][j] - plo.values[a][j] < -3.0 * combined(lo.std_error[a][j], plo.std_error[a][j]))
                    ++rep.monotonicity_violations;
                if (up.values[a][j] - pup.values[a][j] > 3.0 * combined(up.std_error[a][j], pup.std_error[a][j]))
                    ++rep.monotonicity_violations;
                const double grow = (up.values[a][j] - lo.values[a][j]) - (pup.values[a][j] - plo.values[a][j]);
                const double tol = 3.0 * std::sqrt(std::pow(up.std_error[a][j], 2) + std::pow(lo.std_error[a][j], 2) +
                                                   std::pow(pup.std_error[a][j], 2) + std::pow(plo.std_error[a][j], 2));
                if (grow > tol) ++rep.width_violations;
            }
        rep.bracket_width.push_back(width);
    }
    const auto& lo = rep.lower.back();
    const auto& up = rep.upper.back();
    for (std::size_t a = 0; a < rows; ++a)
        for (std::size_t j = 0; j < cols; ++j) {
            const double u = rep.u.values[a][j], se = rep.u.std_error[a][j];
            if (u < lo.values[a][j] - 3.0 * combined(se, lo.std_error[a][j])) ++rep.bracket_violations;
            if (u > up.values[a][j] + 3.0 * combined(se, up.std_error[a][j])) ++rep.bracket_violations;
        }
    return rep;
}

}  // namespace rbdsde
