#include "rbdsde/rbdsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "rbdsde/errors.hpp"
#include "rbdsde/parallel.hpp"

namespace rbdsde {

std::string to_string(ZScheme scheme) {
    return scheme == ZScheme::Regression ? "regression" : "finite-increment";
}

ZScheme z_scheme_from_string(const std::string& name) {
    if (name == "regression") return ZScheme::Regression;
    if (name == "finite-increment") return ZScheme::FiniteIncrement;
    throw std::invalid_argument("unknown z scheme '" + name + "'");
}

void SolverConfig::validate() const {
    if (!(picard_tol > 0.0)) throw std::invalid_argument("picard_tol must be positive");
    if (picard_max_iter < 1) throw std::invalid_argument("picard_max_iter must be at least 1");
    if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be non-negative");
}

RegressionCache::RegressionCache(const ForwardEnsemble& forward, RegressionBasis basis, double ridge)
    : forward_(&forward), basis_(basis), ridge_(ridge), steps_(forward.paths.grid().num_nodes()) {}

const Regression& RegressionCache::at(std::size_t node) const {
    auto& slot = steps_.at(node);
    if (!slot) {
        const ProcessSample& x = forward_->paths;
        const std::size_t d = x.dim();
        std::vector<double> state(x.num_paths() * d);
        for (std::size_t k = 0; k < x.num_paths(); ++k) std::ranges::copy(x.at(k, node), state.begin() + k * d);
        slot = std::make_unique<Regression>(state, d, basis_, ridge_);
    }
    return *slot;
}

namespace {

bool finite(double v) { return std::isfinite(v); }

// Node-major helpers on path-major storage.
struct Layout {
    std::size_t nodes;
    std::size_t dim;
    std::size_t operator()(std::size_t k, std::size_t i, std::size_t c = 0) const { return (k * nodes + i) * dim + c; }
};

}  // namespace

SolutionTriple solve_frozen_rbdsde(const ProblemSpec& problem, const ProcessSample& frozen_y,
                                   const ForwardEnsemble& forward, const NoiseEnsemble& noise,
                                   const RegressionBasis& basis, const SolverConfig& cfg,
                                   const RegressionCache* cache) {
    cfg.validate();
    const TimeGrid& grid = noise.grid();
    const ProcessSample& X = forward.paths;
    const std::size_t M = noise.num_paths(), N = grid.num_steps(), nodes = grid.num_nodes();
    const std::size_t d = problem.d, ell = problem.gen.ell;
    if (!(X.grid() == grid) || X.num_paths() != M || X.dim() != d)
        throw std::invalid_argument("forward ensemble does not match the noise grid");
    if (!(frozen_y.grid() == grid) || frozen_y.num_paths() != M || frozen_y.dim() != 1)
        throw std::invalid_argument("frozen y is not defined on the solver grid");
    if (noise.w_dim() != d) throw std::invalid_argument("noise dimension does not match the problem");
    if (problem.gen.has_g() && noise.b_dim() != ell)
        throw std::invalid_argument("backward noise dimension does not match g");

    std::unique_ptr<RegressionCache> own;
    if (!cache || &cache->forward() != &forward || !(cache->basis() == basis) || cache->ridge() != cfg.ridge) {
        own = std::make_unique<RegressionCache>(forward, basis, cfg.ridge);
        cache = own.get();
    }

    const std::size_t start = forward.start_index;
    const Layout at1{nodes, 1}, atd{nodes, d};
    std::vector<double> Y(M * nodes), Yh(M * nodes), S(M * nodes), K(M * nodes, 0.0), Z(M * nodes * d, 0.0);

    for_each_block(M, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            for (std::size_t i = 0; i < nodes; ++i) S[at1(k, i)] = problem.obstacle_at(grid.node(i), X.at(k, i));
            const double xi = problem.terminal(X.at(k, N));
            if (!finite(xi)) throw GeneratorEvaluationError("terminal condition is not finite", N);
            Y[at1(k, N)] = Yh[at1(k, N)] = xi;
        }
    });

    std::vector<double> next(M), values(M), fitted(M), mean_next;
    for (std::size_t i = N; i-- > start;) {
        const Regression& R = cache->at(i);
        const double dt = grid.dt(i);
        const double t = grid.node(i), t1 = grid.node(i + 1);
        for (std::size_t k = 0; k < M; ++k) next[k] = Y[at1(k, i + 1)];
        if (cfg.z_scheme == ZScheme::FiniteIncrement) mean_next = R.fit(next);

        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t k = 0; k < M; ++k) {
                const double centred = mean_next.empty() ? next[k] : next[k] - mean_next[k];
                values[k] = centred * noise.w(k, i, c);
            }
            R.fit(values, fitted);
            for (std::size_t k = 0; k < M; ++k) Z[atd(k, i, c)] = fitted[k] / dt;
        }

        const auto dB = problem.gen.has_g() ? noise.b_step(i) : std::span<const double>{};
        for_each_block(M, [&](std::size_t, std::size_t begin, std::size_t end) {
            std::vector<double> gout(ell);
            for (std::size_t k = begin; k < end; ++k) {
                const std::span<const double> z{Z.data() + atd(k, i), d};
                const double fv = problem.gen.f(t, X.at(k, i), frozen_y(k, i), z);
                if (!finite(fv)) throw GeneratorEvaluationError("f returned a non-finite value", i);
                double v = next[k] + fv * dt;
                if (!dB.empty()) {
                    problem.gen.g(t1, X.at(k, i + 1), frozen_y(k, i + 1), z, gout);
                    for (std::size_t l = 0; l < ell; ++l) {
                        if (!finite(gout[l])) throw GeneratorEvaluationError("g returned a non-finite value", i + 1);
                        v += gout[l] * dB[l];
                    }
                }
                values[k] = v;
            }
        });
        R.fit(values, fitted);
        for (std::size_t k = 0; k < M; ++k) {
            const double s = S[at1(k, i)];
            Yh[at1(k, i)] = fitted[k];
            Y[at1(k, i)] = fitted[k] < s ? s : fitted[k];
        }
    }

    for (std::size_t k = 0; k < M; ++k) {
        for (std::size_t i = 0; i < start; ++i) {
            Y[at1(k, i)] = Y[at1(k, start)];
            Yh[at1(k, i)] = Yh[at1(k, start)];
        }
        for (std::size_t i = start; i < N; ++i)
            K[at1(k, i + 1)] = K[at1(k, i)] + (Y[at1(k, i)] - Yh[at1(k, i)]);
    }

    SolutionTriple sol{ProcessSample(grid, M, 1, ProcessKind::YLike, std::move(Y)),
                       ProcessSample(grid, M, d, ProcessKind::ZLike, std::move(Z)),
                       ProcessSample(grid, M, 1, ProcessKind::KLike, std::move(K)),
                       ProcessSample(grid, M, 1, ProcessKind::YLike, std::move(Yh)),
                       ProcessSample(grid, M, 1, ProcessKind::YLike, std::move(S)),
                       start,
                       {}};

    const double mean0 = sol.Y.mean_at(start);
    const double sq0 = block_sum(M, [&](std::size_t k) {
        const double e = sol.Y(k, start) - mean0;
        return e * e;
    });
    sol.diagnostics["Y0_mean"] = mean0;
    sol.diagnostics["Y0_stderr"] = M > 1 ? std::sqrt(sq0 / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0;
    sol.diagnostics["K_T_mean"] = sol.K.mean_at(N);
    sol.diagnostics["skorokhod_residual"] = skorokhod_residual(sol);
    return sol;
}

namespace {

std::vector<NodeSummary> summarise(const SolutionTriple& sol, std::span<const double> node_gaps) {
    const TimeGrid& grid = sol.Y.grid();
    const std::size_t M = sol.Y.num_paths(), nodes = grid.num_nodes();
    std::vector<NodeSummary> rows(nodes);
    double partial = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
        auto& r = rows[i];
        r.t = grid.node(i);
        r.mean_Y = sol.Y.mean_at(i);
        r.mean_K = sol.K.mean_at(i);
        r.mean_Z_norm = block_sum(M, [&](std::size_t k) {
                            double s = 0.0;
                            for (double z : sol.Z.at(k, i)) s += z * z;
                            return std::sqrt(s);
                        }) /
                        static_cast<double>(M);
        r.gap = node_gaps[i];
        r.skorokhod_partial = partial;
        if (i + 1 < nodes)
            partial += block_sum(M, [&](std::size_t k) {
                           const double dk = sol.K(k, i + 1) - sol.K(k, i);
                           return dk > 0.0 ? (sol.Y(k, i) - sol.S(k, i)) * dk : 0.0;
                       }) /
                       static_cast<double>(M);
    }
    return rows;
}

}  // namespace

PicardResult picard_solve(const ProblemSpec& problem, const ForwardEnsemble& forward, const NoiseEnsemble& noise,
                          const RegressionBasis& basis, const SolverConfig& cfg) {
    cfg.validate();
    const TimeGrid& grid = noise.grid();
    const std::size_t M = noise.num_paths(), nodes = grid.num_nodes();
    RegressionCache cache(forward, basis, cfg.ridge);

    std::optional<SolutionTriple> last;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> history;
    std::vector<std::vector<double>> node_gaps, node_errs;
    std::vector<std::vector<NodeSummary>> trace;
    ProcessSample previous(grid, M, 1, ProcessKind::YLike);
    for (int n = 1; n <= cfg.picard_max_iter; ++n) {
        SolutionTriple sol = solve_frozen_rbdsde(problem, previous, forward, noise, basis, cfg, &cache);

        std::vector<double> gaps(nodes), errs(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            const double mean = block_sum(M, [&](std::size_t k) {
                                    const double e = sol.Y(k, i) - previous(k, i);
                                    return e * e;
                                }) /
                                static_cast<double>(M);
            const double var = block_sum(M, [&](std::size_t k) {
                const double e = sol.Y(k, i) - previous(k, i);
                const double u = e * e - mean;
                return u * u;
            });
            gaps[i] = mean;
            errs[i] = M > 1 ? std::sqrt(var / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0;
        }
        const double gap = *std::ranges::max_element(gaps);
        trace.push_back(summarise(sol, gaps));
        history.push_back(gap);
        node_gaps.push_back(std::move(gaps));
        node_errs.push_back(std::move(errs));
        iterations = static_cast<std::size_t>(n);
        previous = sol.Y;
        last = std::move(sol);
        if (gap < cfg.picard_tol) {
            converged = true;
            break;
        }
    }
    PicardResult result{std::move(*last),      iterations,          converged,       std::move(history),
                        std::move(node_gaps), std::move(node_errs), std::move(trace)};
    auto& diag = result.solution.diagnostics;
    diag["iterations"] = static_cast<double>(result.iterations);
    diag["converged"] = result.converged ? 1.0 : 0.0;
    diag["final_gap"] = result.gaps.back();
    return result;
}

double skorokhod_residual(const ProcessSample& Y, const ProcessSample& K, const ProcessSample& S) {
    if (!(Y.grid() == K.grid()) || !(Y.grid() == S.grid()) || Y.num_paths() != K.num_paths() ||
        Y.num_paths() != S.num_paths())
        throw std::invalid_argument("skorokhod_residual needs matching grids");
    const std::size_t M = Y.num_paths(), N = Y.grid().num_steps();
    if (M == 0) return 0.0;
    const double total = block_sum(M, [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double dk = K(k, i + 1) - K(k, i);
            if (dk != 0.0) s += (Y(k, i) - S(k, i)) * dk;
        }
        return s;
    });
    return total / static_cast<double>(M);
}

double skorokhod_residual(const SolutionTriple& solution) {
    return skorokhod_residual(solution.Y, solution.K, solution.S);
}

InvariantCounts count_invariant_violations(const SolutionTriple& sol, double tol) {
    InvariantCounts counts;
    const std::size_t M = sol.Y.num_paths(), N = sol.Y.grid().num_steps();
    for (std::size_t k = 0; k < M; ++k)
        for (std::size_t i = 0; i <= N; ++i) {
            if (sol.Y(k, i) < sol.S(k, i) - tol) ++counts.reflection;
            if (i == N) continue;
            const double dk = sol.K(k, i + 1) - sol.K(k, i);
            if (dk < 0.0) ++counts.monotone_k;
            if (dk > 0.0 && sol.Y_hat(k, i) >= sol.S(k, i)) ++counts.minimal_push;
        }
    return counts;
}

namespace {

void require_ordered(const ProblemSpec& p1, const ProblemSpec& p2, const ForwardEnsemble& forward,
                     std::size_t spot_samples, std::uint64_t seed) {
    if (p1.d != p2.d || p1.gen.ell != p2.gen.ell) throw SetupError("comparison problems differ in dimension");
    const ProcessSample& X = forward.paths;
    const std::size_t M = X.num_paths(), N = X.grid().num_steps();
    for (std::size_t k = 0; k < M; ++k) {
        if (p1.terminal(X.at(k, N)) > p2.terminal(X.at(k, N)))
            throw SetupError("terminal values are not ordered on path " + std::to_string(k));
        for (std::size_t i = forward.start_index; i <= N; ++i) {
            const double t = X.grid().node(i);
            if (p1.obstacle_at(t, X.at(k, i)) > p2.obstacle_at(t, X.at(k, i)))
                throw SetupError("obstacles are not ordered at node " + std::to_string(i));
        }
    }
    const auto samples = sample_arguments(p1, spot_samples, 5.0, seed);
    const std::size_t ell = p1.gen.ell;
    std::vector<double> g1(ell), g2(ell);
    for (const auto& s : samples) {
        if (p1.gen.f(s.t, s.x, s.y, s.z) > p2.gen.f(s.t, s.x, s.y, s.z))
            throw SetupError("generators are not ordered at a sampled argument");
        std::ranges::fill(g1, 0.0);
        std::ranges::fill(g2, 0.0);
        if (p1.gen.has_g()) p1.gen.g(s.t, s.x, s.y, s.z, g1);
        if (p2.gen.has_g()) p2.gen.g(s.t, s.x, s.y, s.z, g2);
        for (std::size_t l = 0; l < ell; ++l)
            if (std::abs(g1[l] - g2[l]) > 1e-12 * (1.0 + std::abs(g1[l])))
                throw SetupError("comparison problems must share g");
    }
}

}  // namespace

ComparisonReport comparison_experiment(const ProblemSpec& problem1, const ProblemSpec& problem2,
                                       const ForwardEnsemble& forward, const NoiseEnsemble& noise,
                                       const RegressionBasis& basis, const SolverConfig& cfg,
                                       std::size_t spot_samples, std::uint64_t seed) {
    require_ordered(problem1, problem2, forward, spot_samples, seed);
    const PicardResult r1 = picard_solve(problem1, forward, noise, basis, cfg);
    const PicardResult r2 = picard_solve(problem2, forward, noise, basis, cfg);
    const ProcessSample& Y1 = r1.solution.Y;
    const ProcessSample& Y2 = r2.solution.Y;
    const std::size_t M = Y1.num_paths(), nodes = Y1.grid().num_nodes();

    ComparisonReport rep;
    rep.iterations_1 = r1.iterations;
    rep.iterations_2 = r2.iterations;
    rep.y0_1 = Y1.mean_at(forward.start_index);
    rep.y0_2 = Y2.mean_at(forward.start_index);
    rep.mean_violation.resize(nodes);
    rep.stderr_violation.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        auto part = [&](std::size_t k) { return std::max(0.0, Y1(k, i) - Y2(k, i)); };
        const double mean = block_sum(M, part) / static_cast<double>(M);
        const double var = block_sum(M, [&](std::size_t k) {
            const double e = part(k) - mean;
            return e * e;
        });
        const double se = M > 1 ? std::sqrt(var / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0;
        rep.mean_violation[i] = mean;
        rep.stderr_violation[i] = se;
        rep.max_mean_violation = std::max(rep.max_mean_violation, mean);
        if (mean > 3.0 * se) rep.within_tolerance = false;
    }
    std::size_t violating = 0;
    for (std::size_t k = 0; k < M; ++k)
        for (std::size_t i = 0; i < nodes; ++i)
            if (Y1(k, i) > Y2(k, i) + 1e-12) {
                ++violating;
                break;
            }
    rep.violation_fraction = M > 0 ? static_cast<double>(violating) / static_cast<double>(M) : 0.0;
    return rep;
}

std::vector<ComparisonFixture> comparison_fixtures() {
    const ProblemSpec base = builtin_problem("lipschitz-linear", {{"b", 0.0}});
    const double level = base.parameters.at("level");
    std::vector<ComparisonFixture> out;

    ProblemSpec terminal = base;
    terminal.terminal = [l = base.terminal](std::span<const double> x) { return l(x) + 1.0; };
    out.push_back({"terminal-shift", base, terminal});

    ProblemSpec obstacle = base;
    obstacle.obstacle = [level](double, std::span<const double>) { return level + 0.5; };
    obstacle.terminal = [l = base.terminal, level](std::span<const double> x) { return std::max(l(x), level + 0.5); };
    out.push_back({"obstacle-shift", base, obstacle});

    ProblemSpec generator = base;
    generator.gen.f = [f = base.gen.f](double t, std::span<const double> x, double y, std::span<const double> z) {
        return f(t, x, y, z) + 0.2;
    };
    generator.gen.separable.reset();
    out.push_back({"generator-shift", base, generator});
    return out;
}

MomentBound measure_moment_bound(const ProblemSpec& problem, const ForwardEnsemble& forward, double c) {
    const ProcessSample& X = forward.paths;
    const TimeGrid& grid = X.grid();
    const std::size_t M = X.num_paths(), N = grid.num_steps(), ell = problem.gen.ell;
    const double inv = 1.0 / static_cast<double>(M);
    MomentBound mb;
    mb.terminal = block_sum(M, [&](std::size_t k) {
                      const double v = problem.terminal(X.at(k, N));
                      return v * v;
                  }) * inv;
    if (problem.has_obstacle())
        mb.obstacle = block_sum(M, [&](std::size_t k) {
                          double s = 0.0;
                          for (std::size_t i = forward.start_index; i <= N; ++i) {
                              const double h = problem.obstacle_at(grid.node(i), X.at(k, i));
                              if (std::isfinite(h)) s = std::max(s, h * h);
                          }
                          return s;
                      }) * inv;
    const std::vector<double> zero(problem.d, 0.0);
    mb.f_zero = block_sum(M, [&](std::size_t k) {
                    double s = 0.0;
                    for (std::size_t i = forward.start_index; i < N; ++i) {
                        const double v = problem.gen.f(grid.node(i), X.at(k, i), 0.0, zero);
                        s += v * v * grid.dt(i);
                    }
                    return s;
                }) * inv;
    if (problem.gen.has_g())
        mb.g_zero = block_sum(M, [&](std::size_t k) {
                        std::vector<double> out(ell);
                        double s = 0.0;
                        for (std::size_t i = forward.start_index; i < N; ++i) {
                            problem.gen.g(grid.node(i), X.at(k, i), 0.0, zero, out);
                            for (double v : out) s += v * v * grid.dt(i);
                        }
                        return s;
                    }) * inv;
    mb.mu = c * std::exp(c * grid.horizon()) * (1.0 + mb.terminal + mb.obstacle + mb.f_zero + mb.g_zero);
    return mb;
}

bool GapMajorantReport::all_within() const {
    return std::ranges::all_of(entries, [](const GapMajorantEntry& e) { return e.within; });
}

GapMajorantReport picard_gap_vs_majorant(const PicardResult& result, const MajorantSequence& majorant) {
    GapMajorantReport rep;
    for (std::size_t n = 1; n < result.node_gaps.size(); ++n) {
        const auto& gaps = result.node_gaps[n];
        const auto& errs = result.node_gap_stderr[n];
        if (gaps.size() != majorant.grid().num_nodes())
            throw std::invalid_argument("majorant grid does not match the solver grid");
        GapMajorantEntry e;
        e.n = n;
        e.worst_excess = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < gaps.size(); ++i) {
            const double excess = gaps[i] - majorant.at(n - 1, i);
            e.worst_excess = std::max(e.worst_excess, excess);
            if (excess > 3.0 * errs[i]) {
                e.violations.push_back(i);
                e.within = false;
            } else if (excess > 0.0) {
                e.tolerance_bound.push_back(i);
            }
        }
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

}  // namespace rbdsde
