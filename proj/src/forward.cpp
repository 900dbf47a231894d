#include "rbdsde/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rbdsde/parallel.hpp"

namespace rbdsde {

ForwardEnsemble simulate_forward(const ProblemSpec& problem, double t, std::span<const double> x,
                                 const NoiseEnsemble& noise) {
    const TimeGrid& grid = noise.grid();
    const auto start = grid.index_of(t);
    if (!start) throw std::invalid_argument("forward start time is not a grid node");
    const std::size_t d = problem.d;
    if (x.size() != d) throw std::invalid_argument("start point has the wrong dimension");
    if (noise.w_dim() != d) throw std::invalid_argument("noise dimension differs from the state dimension");

    const std::size_t nodes = grid.num_nodes();
    const std::size_t paths = noise.num_paths();
    std::vector<double> values(paths * nodes * d);
    for_each_block(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> b(d), sigma(d * d);
        for (std::size_t k = begin; k < end; ++k) {
            double* row = values.data() + k * nodes * d;
            for (std::size_t i = 0; i <= *start; ++i) std::copy(x.begin(), x.end(), row + i * d);
            for (std::size_t i = *start; i + 1 < nodes; ++i) {
                const std::span<const double> xi(row + i * d, d);
                double* next = row + (i + 1) * d;
                problem.drift(xi, b);
                problem.diffusion(xi, sigma);
                const auto dw = noise.w_step(k, i);
                const double dt = grid.dt(i);
                for (std::size_t r = 0; r < d; ++r) {
                    double v = xi[r] + b[r] * dt;
                    for (std::size_t c = 0; c < d; ++c) v += sigma[r * d + c] * dw[c];
                    next[r] = v;
                }
            }
        }
    });
    return ForwardEnsemble{grid.node(*start), *start, std::vector<double>(x.begin(), x.end()),
                           ProcessSample(grid, paths, d, ProcessKind::YLike, std::move(values))};
}

FlowContinuityReport flow_continuity_test(const ProblemSpec& problem, double t, std::span<const double> x,
                                          double t2, std::span<const double> x2, int p,
                                          const NoiseEnsemble& noise) {
    if (p < 2 || p % 2 != 0) throw std::invalid_argument("flow exponent p must be a positive even integer");
    const auto a = simulate_forward(problem, t, x, noise);
    const auto b = simulate_forward(problem, t2, x2, noise);
    const std::size_t paths = noise.num_paths(), nodes = noise.grid().num_nodes(), d = problem.d;
    auto sup_p = [&](std::size_t k) {
        double sup = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = a.paths(k, i, c) - b.paths(k, i, c);
                s += diff * diff;
            }
            sup = std::max(sup, std::pow(s, p / 2));
        }
        return sup;
    };
    const double n = static_cast<double>(paths);
    FlowContinuityReport rep;
    rep.estimate = block_sum(paths, sup_p) / n;
    const double second = block_sum(paths, [&](std::size_t k) {
        const double v = sup_p(k) - rep.estimate;
        return v * v;
    });
    rep.std_error = paths > 1 ? std::sqrt(second / (n - 1.0) / n) : 0.0;
    double dx2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) dx2 += (x[c] - x2[c]) * (x[c] - x2[c]);
    rep.scale = std::pow(std::abs(t - t2), p / 2.0) + std::pow(dx2, p / 2.0);
    rep.ratio = rep.scale > 0.0 ? rep.estimate / rep.scale : 0.0;
    return rep;
}

double log_log_slope(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size() || u.size() < 2) throw std::invalid_argument("slope needs two or more points");
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        mu += std::log(u[i]);
        mv += std::log(v[i]);
    }
    mu /= static_cast<double>(u.size());
    mv /= static_cast<double>(u.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = std::log(u[i]) - mu;
        sxy += a * (std::log(v[i]) - mv);
        sxx += a * a;
    }
    return sxy / sxx;
}

FlowLadderReport flow_continuity_ladder(const ProblemSpec& problem, double t, std::span<const double> x,
                                        FlowShift shift, std::span<const double> sizes, int p,
                                        const NoiseEnsemble& noise, double spread_limit) {
    FlowLadderReport rep;
    std::vector<double> estimates;
    for (double h : sizes) {
        std::vector<double> x2(x.begin(), x.end());
        double t2 = t;
        if (shift == FlowShift::Spatial) x2[0] += h;
        else t2 += h;
        if (shift == FlowShift::Temporal) {
            const auto idx = noise.grid().index_of(t2, 1e-9);
            if (!idx) throw std::invalid_argument("temporal shift must land on a grid node");
            t2 = noise.grid().node(*idx);
        }
        rep.perturbation.push_back(h);
        rep.points.push_back(flow_continuity_test(problem, t, x, t2, x2, p, noise));
        estimates.push_back(rep.points.back().estimate);
    }
    double lo = rep.points.front().ratio, hi = lo;
    for (const auto& pt : rep.points) {
        lo = std::min(lo, pt.ratio);
        hi = std::max(hi, pt.ratio);
    }
    rep.spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    rep.stable = std::isfinite(rep.spread) && rep.spread <= spread_limit;
    const bool positive = std::all_of(estimates.begin(), estimates.end(), [](double e) { return e > 0.0; });
    rep.slope = positive && sizes.size() >= 2 ? log_log_slope(sizes, estimates) : 0.0;
    return rep;
}

StrongConvergenceReport strong_convergence(const ProblemSpec& problem, std::span<const double> x,
                                           const NoiseEnsemble& reference,
                                           std::span<const std::size_t> factors) {
    const auto fine = simulate_forward(problem, 0.0, x, reference);
    const std::size_t last_fine = reference.grid().num_steps();
    StrongConvergenceReport rep;
    std::vector<double> dts;
    for (std::size_t f : factors) {
        const auto coarse_noise = coarsen(reference, f);
        const auto coarse = simulate_forward(problem, 0.0, x, coarse_noise);
        const std::size_t last = coarse_noise.grid().num_steps();
        const double mse = block_sum(reference.num_paths(), [&](std::size_t k) {
            double s = 0.0;
            for (std::size_t c = 0; c < problem.d; ++c) {
                const double e = coarse.paths(k, last, c) - fine.paths(k, last_fine, c);
                s += e * e;
            }
            return s;
        }) / static_cast<double>(reference.num_paths());
        rep.steps.push_back(last);
        rep.rms_error.push_back(std::sqrt(mse));
        dts.push_back(coarse_noise.grid().dt(0));
    }
    rep.slope = factors.size() >= 2 ? log_log_slope(dts, rep.rms_error) : 0.0;
    return rep;
}

}  // namespace rbdsde
