#pragma once

// Independent reference computations used as test oracles.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rbdsde/forward.hpp"
#include "rbdsde/paths.hpp"
#include "rbdsde/regression.hpp"

namespace oracles {

/// Cox-Ross-Rubinstein tree for an American put.
inline double american_put_crr(double s0, double strike, double r, double sigma, double T, int steps) {
    const double dt = T / steps;
    const double u = std::exp(sigma * std::sqrt(dt)), d = 1.0 / u;
    const double p = (std::exp(r * dt) - d) / (u - d), disc = std::exp(-r * dt);
    std::vector<double> v(steps + 1);
    for (int j = 0; j <= steps; ++j) v[j] = std::max(strike - s0 * std::pow(u, j) * std::pow(d, steps - j), 0.0);
    for (int i = steps - 1; i >= 0; --i)
        for (int j = 0; j <= i; ++j)
            v[j] = std::max(disc * (p * v[j + 1] + (1.0 - p) * v[j]), strike - s0 * std::pow(u, j) * std::pow(d, i - j));
    return v[0];
}

/// Least squares on monomials of the state rescaled to [-1, 1], solved by
/// Householder QR of the design matrix (no normal equations, no ridge).
class MonomialProjector {
public:
    MonomialProjector(const std::vector<double>& x, int degree) {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        const double mid = 0.5 * (*lo + *hi), half = 0.5 * (*hi - *lo);
        const int cols = half > 1e-12 * std::max({1.0, std::abs(*lo), std::abs(*hi)}) ? degree + 1 : 1;
        A_.resize(static_cast<Eigen::Index>(x.size()), cols);
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double u = cols > 1 ? (x[k] - mid) / half : 0.0;
            double p = 1.0;
            for (int c = 0; c < cols; ++c, p *= u) A_(static_cast<Eigen::Index>(k), c) = p;
        }
        qr_.compute(A_);
    }

    std::vector<double> fit(const std::vector<double>& v) const {
        const Eigen::Map<const Eigen::VectorXd> b(v.data(), static_cast<Eigen::Index>(v.size()));
        const Eigen::VectorXd f = A_ * qr_.solve(b);
        return {f.data(), f.data() + f.size()};
    }

private:
    Eigen::MatrixXd A_;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
};

/// Plain regression scheme for a one-dimensional BSDE (no g, no obstacle)
/// run for a fixed number of Picard sweeps from Y = 0. Returns Y in
/// ProcessSample layout (path major).
inline std::vector<double> plain_regression_bsde(const rbdsde::ProblemSpec& problem,
                                                 const rbdsde::ForwardEnsemble& forward,
                                                 const rbdsde::NoiseEnsemble& noise, int degree,
                                                 std::size_t sweeps) {
    const auto& grid = noise.grid();
    const std::size_t M = noise.num_paths(), N = grid.num_steps(), nodes = N + 1;
    const auto at = [nodes](std::size_t k, std::size_t i) { return k * nodes + i; };
    std::vector<MonomialProjector> proj;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> x(M);
        for (std::size_t k = 0; k < M; ++k) x[k] = forward.paths(k, i);
        proj.emplace_back(x, degree);
    }
    std::vector<double> prev(M * nodes, 0.0), Y(M * nodes);
    for (std::size_t n = 0; n < sweeps; ++n) {
        for (std::size_t k = 0; k < M; ++k) Y[at(k, N)] = problem.terminal(forward.paths.at(k, N));
        for (std::size_t i = N; i-- > 0;) {
            const double dt = grid.dt(i);
            std::vector<double> v(M);
            for (std::size_t k = 0; k < M; ++k) v[k] = Y[at(k, i + 1)] * noise.w(k, i);
            std::vector<double> z = proj[i].fit(v);
            for (double& q : z) q /= dt;
            for (std::size_t k = 0; k < M; ++k) {
                const double zk[1] = {z[k]};
                v[k] = Y[at(k, i + 1)] + problem.gen.f(grid.node(i), forward.paths.at(k, i), prev[at(k, i)], zk) * dt;
            }
            const auto y = proj[i].fit(v);
            for (std::size_t k = 0; k < M; ++k) Y[at(k, i)] = y[k];
        }
        prev = Y;
    }
    return Y;
}

/// Reflected scheme for f = a y + b z with y taken implicitly at each step:
/// Y_i = max((E_i[Y_{i+1}] + b Z_i dt) / (1 - a dt), S_i).
inline rbdsde::ProcessSample implicit_linear_rbsde(const rbdsde::ProblemSpec& problem,
                                                   const rbdsde::ForwardEnsemble& forward,
                                                   const rbdsde::NoiseEnsemble& noise,
                                                   const rbdsde::RegressionBasis& basis) {
    const double a = problem.parameters.at("a"), b = problem.parameters.at("b");
    const auto& grid = noise.grid();
    const std::size_t M = noise.num_paths(), N = grid.num_steps(), nodes = N + 1;
    const auto at = [nodes](std::size_t k, std::size_t i) { return k * nodes + i; };
    std::vector<double> Y(M * nodes);
    for (std::size_t k = 0; k < M; ++k) Y[at(k, N)] = problem.terminal(forward.paths.at(k, N));
    for (std::size_t i = N; i-- > 0;) {
        const double dt = grid.dt(i);
        std::vector<double> x(M), next(M), v(M);
        for (std::size_t k = 0; k < M; ++k) {
            x[k] = forward.paths(k, i);
            next[k] = Y[at(k, i + 1)];
            v[k] = next[k] * noise.w(k, i);
        }
        const rbdsde::Regression reg(x, 1, basis, 1e-8);
        const auto z = reg.fit(v);
        const auto c = reg.fit(next);
        for (std::size_t k = 0; k < M; ++k) {
            const double y = (c[k] + b * z[k]) / (1.0 - a * dt);  // b Z dt = b E[Y dW]
            Y[at(k, i)] = std::max(y, problem.obstacle_at(grid.node(i), forward.paths.at(k, i)));
        }
    }
    return rbdsde::ProcessSample(grid, M, 1, rbdsde::ProcessKind::YLike, std::move(Y));
}

}  // namespace oracles
