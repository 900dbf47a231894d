#include "rbdsde/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "rbdsde/errors.hpp"
#include "rbdsde/forward.hpp"
#include "rbdsde/modulus.hpp"
#include "rbdsde/parallel.hpp"

namespace rbdsde {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_solution_csv(std::ostream& out, const PicardResult& result) {
    out << "iteration,node,t,mean_Y,mean_Z_norm,mean_K,gap,skorokhod_partial\n";
    for (std::size_t n = 0; n < result.trace.size(); ++n)
        for (std::size_t i = 0; i < result.trace[n].size(); ++i) {
            const NodeSummary& s = result.trace[n][i];
            out << n + 1 << ',' << i << ',' << format_double(s.t) << ',' << format_double(s.mean_Y) << ','
                << format_double(s.mean_Z_norm) << ',' << format_double(s.mean_K) << ',' << format_double(s.gap)
                << ',' << format_double(s.skorokhod_partial) << '\n';
        }
}

void write_gap_csv(std::ostream& out, const PicardResult& result) {
    out << "iteration,gap\n";
    for (std::size_t n = 0; n < result.gaps.size(); ++n) out << n + 1 << ',' << format_double(result.gaps[n]) << '\n';
}

void write_field_csv(std::ostream& out, const FieldSample& u, const std::vector<int>& n_values,
                     const std::vector<FieldSample>& lower, const std::vector<FieldSample>& upper) {
    const std::size_t d = u.space_grid.empty() ? 1 : u.space_grid.front().size();
    out << 't';
    if (d == 1) {
        out << ",x";
    } else {
        for (std::size_t c = 0; c < d; ++c) out << ",x" << c + 1;
    }
    out << ",u";
    for (int n : n_values) out << ",u_lower_" << n << ",u_upper_" << n;
    out << '\n';
    for (std::size_t a = 0; a < u.times.size(); ++a)
        for (std::size_t j = 0; j < u.space_grid.size(); ++j) {
            out << format_double(u.times[a]);
            for (double x : u.space_grid[j]) out << ',' << format_double(x);
            out << ',' << format_double(u.at(a, j));
            for (std::size_t q = 0; q < n_values.size(); ++q)
                out << ',' << format_double(lower.at(q).at(a, j)) << ',' << format_double(upper.at(q).at(a, j));
            out << '\n';
        }
}

bool SuiteReport::passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckLine& c) { return c.pass; });
}

std::string SuiteReport::lines() const {
    std::ostringstream s;
    for (const auto& c : checks) {
        s << (c.pass ? "PASS " : "FAIL ") << suite << '/' << c.name;
        if (!c.detail.empty()) s << ' ' << c.detail;
        s << '\n';
    }
    return s.str();
}

namespace {

std::string kv(const std::string& key, double v) { return key + "=" + format_double(v); }

NoiseEnsemble noise_for(const ProblemSpec& p, std::size_t steps, std::size_t paths, std::uint64_t seed,
                        std::uint64_t b_index = 0) {
    return sample_noise(build_grid(p.horizon, static_cast<long>(steps)), static_cast<long>(paths),
                        static_cast<long>(p.d), static_cast<long>(p.gen.ell), seed, b_index);
}

std::vector<double> decade_ladder() {
    std::vector<double> eps;
    for (int k = 2; k <= 12; ++k) eps.push_back(std::pow(10.0, -k));
    return eps;
}

ModulusSpec sqrt_modulus() {
    std::vector<double> nodes;
    for (int k = 0; k <= 3400; ++k) nodes.push_back(1e-16 * std::pow(10.0, k / 200.0));
    return ModulusSpec::tabulate([](double u) { return std::sqrt(u); }, nodes);
}

ProblemSpec expression(const std::string& f, const std::string& g, const std::string& drift = "0",
                       const std::string& diffusion = "1", double x0 = 0.0) {
    ExpressionProblem def;
    def.f = f;
    def.g = g;
    def.drift = drift;
    def.diffusion = diffusion;
    def.x0 = x0;
    return expression_problem(def);
}

void suite_condition_a(const ExperimentConfig& cfg, SuiteReport& rep) {
    const auto eps = decade_ladder();
    const std::vector<std::pair<std::string, ModulusSpec>> moduli{{"lipschitz", ModulusSpec::lipschitz(1.0)},
                                                                  {"log", ModulusSpec::log_modulus()},
                                                                  {"loglog", ModulusSpec::loglog_modulus()},
                                                                  {"sqrt", sqrt_modulus()}};
    for (const auto& [name, rho] : moduli) {
        const Verdict expected = name == "sqrt" ? Verdict::Fails : Verdict::Passes;
        const auto r = condition_a_uniqueness_check(rho, 1.0, 1.0, eps);
        rep.checks.push_back({"verdict-" + name, r.verdict == expected,
                              "verdict=" + to_string(r.verdict) + " expected=" + to_string(expected)});
    }
    const auto grid = build_grid(0.5, 200);
    for (const auto& [name, rho] : moduli) {
        const auto seq = majorant_sequence(rho, 1.5, 1.0, grid, 12);
        bool zero_at_T = true;
        for (std::size_t n = 0; n < seq.size(); ++n) zero_at_T = zero_at_T && seq.phi(n).back() == 0.0;
        rep.checks.push_back({"majorant-" + name, seq.non_increasing() && zero_at_T,
                              std::string("non_increasing=") + (seq.non_increasing() ? "1" : "0") +
                                  " zero_at_T=" + (zero_at_T ? "1" : "0")});
    }
    {
        // phi_n(t) = M1 (M c)^{n+1} (T - t)^{n+1} / (n+1)!
        const double M = 1.5, c = 0.5, M1 = 1.0;
        const auto fine = build_grid(1.0, 10000);
        const auto seq = majorant_sequence(ModulusSpec::lipschitz(c), M, M1, fine, 8);
        double worst = 0.0;
        for (std::size_t n = 0; n < seq.size(); ++n)
            for (std::size_t i = 0; i < fine.num_nodes(); ++i) {
                const double tau = 1.0 - fine.node(i);
                const double bound = M1 * std::pow(M * c * tau, static_cast<double>(n + 1)) / std::tgamma(n + 2.0);
                worst = std::max(worst, std::abs(seq.at(n, i) - bound));
            }
        rep.checks.push_back({"majorant-lipschitz-closed-form", worst <= 1e-8, kv("max_error", worst)});
    }
    const auto unit = [](std::size_t, double) { return 1.0; };
    for (const auto& [name, rho] : moduli) {
        for (double horizon : {1.0, 3.0}) {
            std::string label = "partition-" + name + "-T" + format_double(horizon);
            try {
                const auto bp = horizon_partition(rho, 1.0, unit, horizon);
                double total = 0.0;
                bool decreasing = true;
                for (std::size_t p = 1; p < bp.size(); ++p) {
                    decreasing = decreasing && bp[p] < bp[p - 1];
                    total += bp[p - 1] - bp[p];
                }
                const bool ok = decreasing && bp.back() == 0.0 && std::abs(total - horizon) <= 1e-12;
                rep.checks.push_back({label, ok,
                                      "segments=" + std::to_string(bp.size() - 1) + " " +
                                          kv("tiling_error", std::abs(total - horizon))});
            } catch (const NonTerminationError& e) {
                rep.checks.push_back({label, false, e.what()});
            }
        }
    }
    if (cfg.modulus) {
        const ProblemSpec p = build_problem(cfg);
        const auto r = condition_a_uniqueness_check(p.gen.modulus, 1.0, p.horizon, eps);
        rep.checks.push_back({"verdict-configured", r.verdict != Verdict::Inconclusive,
                              "modulus=" + p.gen.modulus.describe() + " verdict=" + to_string(r.verdict)});
    }
}

void suite_envelopes(const ExperimentConfig& cfg, SuiteReport& rep) {
    const ProblemSpec p = cfg.problem.empty() && !cfg.expression ? builtin_problem("paper-1-4") : build_problem(cfg);
    std::vector<int> ns;
    for (int n : {4, 8, 16, 32})
        if (n >= std::ceil(p.gen.C())) ns.push_back(n);
    if (ns.size() < 2) {
        rep.checks.push_back({"n-values", false, "fewer than two envelope indices reach ceil(C)"});
        return;
    }
    const auto samples = sample_arguments(p, 10000, 10.0, cfg.seed);
    const auto r = envelope_property_check(p.gen, ns, samples, {}, 100, cfg.seed);
    rep.checks.push_back({"sandwich", r.sandwich, kv("worst", r.worst_sandwich)});
    rep.checks.push_back({"n-monotone", r.monotone, kv("worst", r.worst_monotone)});
    rep.checks.push_back({"growth", r.growth, kv("worst", r.worst_growth)});
    rep.checks.push_back({"lipschitz-xy", r.lipschitz_xy, kv("worst", r.worst_lipschitz_xy)});
    rep.checks.push_back({"lipschitz-z", r.lipschitz_z, kv("worst", r.worst_lipschitz_z)});
    rep.checks.push_back({"convergence", r.convergence, kv("upper_error_last", r.upper_error.back())});
    rep.checks.push_back({"brute-force-oracle", r.matches_reference, kv("worst", r.worst_reference)});
    rep.checks.push_back({"grid-range", !r.range_error, "truncated=" + std::to_string(r.truncated)});
}

void suite_comparison(const ExperimentConfig& cfg, SuiteReport& rep) {
    for (const auto& fx : comparison_fixtures()) {
        const auto noise = noise_for(fx.lower, cfg.N, cfg.paths, cfg.seed, cfg.b_index);
        const auto forward = simulate_forward(fx.lower, 0.0, fx.lower.x0, noise);
        const auto r = comparison_experiment(fx.lower, fx.upper, forward, noise,
                                             RegressionBasis::piecewise_constant(16), cfg.solver);
        rep.checks.push_back({fx.name, r.within_tolerance,
                              kv("max_mean_violation", r.max_mean_violation) + " " + kv("y0_lower", r.y0_1) + " " +
                                  kv("y0_upper", r.y0_2)});
    }
}

void suite_skorokhod(const ExperimentConfig& cfg, SuiteReport& rep) {
    std::vector<ProblemSpec> problems;
    if (cfg.problem.empty() && !cfg.expression) {
        for (const auto& name : catalog_names()) problems.push_back(builtin_problem(name));
    } else {
        problems.push_back(build_problem(cfg));
    }
    for (const auto& p : problems) {
        const auto noise = noise_for(p, cfg.N, cfg.paths, cfg.seed, cfg.b_index);
        const auto forward = simulate_forward(p, 0.0, p.x0, noise);
        const auto r = picard_solve(p, forward, noise, cfg.basis, cfg.solver);
        const auto& sol = r.solution;
        const double residual = skorokhod_residual(sol);
        const double y_norm = std::sqrt(empirical_norm(sol.Y, NormKind::S2));
        const double k_T = sol.K.mean_at(noise.grid().num_steps());
        const double bound = 1e-2 * y_norm * k_T;
        rep.checks.push_back({p.name + "-flatness", std::abs(residual) <= bound,
                              kv("residual", residual) + " " + kv("bound", bound)});
        const auto inv = count_invariant_violations(sol);
        rep.checks.push_back({p.name + "-reflection", inv.reflection == 0,
                              "violations=" + std::to_string(inv.reflection)});
        rep.checks.push_back({p.name + "-minimal-push", inv.minimal_push == 0 && inv.monotone_k == 0,
                              "violations=" + std::to_string(inv.minimal_push + inv.monotone_k)});
    }
}

void suite_doss(const ExperimentConfig& cfg, SuiteReport& rep) {
    const std::vector<std::vector<double>> xs{{-1.0}, {0.0}, {1.0}};
    const std::vector<double> ys{-2.0, -1.0, -0.25, 0.0, 0.5, 1.5};
    const std::size_t steps = std::max<std::size_t>(cfg.N, 1);
    const auto identity_check = [&](const GeneratorSpec& gen, const std::string& name) {
        const auto noise = sample_noise(build_grid(1.0, static_cast<long>(steps)), 1, 1,
                                        static_cast<long>(gen.ell), cfg.seed, cfg.b_index);
        const auto doss = solve_doss_eta(gen, noise, xs, ys);
        double worst = 0.0;
        for (std::size_t i = 0; i <= steps; ++i)
            for (std::size_t j = 0; j < xs.size(); ++j)
                for (std::size_t m = 0; m < ys.size(); ++m)
                    worst = std::max({worst, std::abs(doss.eta(i, j, m) - ys[m]),
                                      std::abs(doss.epsilon(i, j, ys[m]) - ys[m])});
        rep.checks.push_back({name, worst == 0.0, kv("max_deviation", worst)});
    };

    const bool given = !cfg.problem.empty() || cfg.expression;
    if (given) {
        const ProblemSpec p = build_problem(cfg);
        if (p.gen.g_depends_on_z) {
            rep.checks.push_back({p.name + "-z-free", false, "g depends on z"});
        } else if (!p.gen.has_g()) {
            identity_check(p.gen, p.name + "-identity");
        } else {
            // The first-order rate needs g twice differentiable in y, which a
            // configured g need not be; only the decrease is asserted here.
            const auto r = doss_inverse_convergence(p.gen, p.horizon, steps, xs, ys, 256, cfg.seed);
            rep.checks.push_back({p.name + "-inverse-decreases", r.fine_error < r.coarse_error,
                                  kv("coarse", r.coarse_error) + " " + kv("fine", r.fine_error) + " " +
                                      kv("ratio", r.ratio)});
        }
        return;
    }

    identity_check(expression("0", "").gen, "g-zero-identity");
    {
        const auto gen = expression("0", "0.3").gen;
        const auto noise = sample_noise(build_grid(1.0, static_cast<long>(steps)), 1, 1, 1, cfg.seed, cfg.b_index);
        const auto doss = solve_doss_eta(gen, noise, xs, ys);
        double worst = 0.0;
        for (std::size_t i = 0; i <= steps; ++i) {
            double tail = 0.0;
            for (std::size_t s = i; s < steps; ++s) tail += noise.b_step(s)[0];
            for (std::size_t j = 0; j < xs.size(); ++j)
                for (std::size_t m = 0; m < ys.size(); ++m)
                    worst = std::max(worst, std::abs(doss.eta(i, j, m) - (ys[m] + 0.3 * tail)));
        }
        rep.checks.push_back({"constant-g-closed-form", worst <= 1e-12, kv("max_error", worst)});
    }
    {
        const auto r = doss_inverse_convergence(expression("0", "0.5*y").gen, 1.0, 50, {{0.0}}, ys, 256, cfg.seed);
        rep.checks.push_back({"linear-g-inverse-order", r.ratio >= 1.6 && r.ratio <= 2.4,
                              kv("coarse", r.coarse_error) + " " + kv("fine", r.fine_error) + " " +
                                  kv("ratio", r.ratio)});
    }
}

void suite_flow(const ExperimentConfig& cfg, SuiteReport& rep) {
    const std::vector<double> origin{0.0};
    const auto noise = sample_noise(build_grid(1.0, 1024), 4000, 1, 1, cfg.seed);
    {
        const auto p = expression("0", "", "sin(x)", "1 + 0.5*cos(x)");
        const std::vector<double> sizes{1.0, 0.5, 0.25, 0.125};
        const auto r = flow_continuity_ladder(p, 0.0, origin, FlowShift::Spatial, sizes, 2, noise);
        rep.checks.push_back({"spatial-ladder", r.stable, kv("spread", r.spread) + " " + kv("slope", r.slope)});
    }
    {
        const auto p = expression("0", "");
        const std::vector<double> sizes{0.125, 0.0625, 0.03125, 0.015625};
        for (int pw : {2, 4}) {
            const auto r = flow_continuity_ladder(p, 0.25, origin, FlowShift::Temporal, sizes, pw, noise);
            rep.checks.push_back({"temporal-exponent-p" + std::to_string(pw), std::abs(r.slope - pw / 2.0) <= 0.15,
                                  kv("slope", r.slope) + " " + kv("expected", pw / 2.0)});
        }
    }
    {
        const auto p = expression("0", "", "0.05*x", "0.8*x", 1.0);
        const auto ref = sample_noise(build_grid(1.0, 1024), 20000, 1, 1, cfg.seed);
        const std::vector<std::size_t> factors{64, 32, 16, 8};
        const std::vector<double> x{1.0};
        const auto r = strong_convergence(p, x, ref, factors);
        rep.checks.push_back({"euler-strong-order", std::abs(r.slope - 0.5) <= 0.2, kv("slope", r.slope)});
    }
    if (!cfg.problem.empty() || cfg.expression) {
        const ProblemSpec p = build_problem(cfg);
        const auto pn = noise_for(p, 1024, 4000, cfg.seed);
        std::vector<double> sizes;
        for (double s : {0.2, 0.1, 0.05, 0.025}) sizes.push_back(s * std::max(1.0, std::abs(p.x0.front())));
        const auto r = flow_continuity_ladder(p, 0.0, p.x0, FlowShift::Spatial, sizes, 2, pn);
        rep.checks.push_back({p.name + "-spatial-ladder", r.stable, kv("spread", r.spread)});
    }
}

const std::map<std::string, std::function<void(const ExperimentConfig&, SuiteReport&)>>& suite_table() {
    static const std::map<std::string, std::function<void(const ExperimentConfig&, SuiteReport&)>> table{
        {"condition-a", suite_condition_a}, {"envelopes", suite_envelopes}, {"comparison", suite_comparison},
        {"skorokhod", suite_skorokhod},     {"doss", suite_doss},           {"flow", suite_flow},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& verify_suites() {
    static const std::vector<std::string> names{"condition-a", "envelopes", "comparison", "skorokhod", "doss", "flow"};
    return names;
}

SuiteReport run_verify_suite(const std::string& suite, const ExperimentConfig& cfg) {
    const auto& table = suite_table();
    const auto it = table.find(suite);
    if (it == table.end()) throw std::invalid_argument("unknown verify suite '" + suite + "'");
    SuiteReport rep;
    rep.suite = suite;
    it->second(cfg, rep);
    return rep;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

struct Flags {
    std::string config;
    std::string problem;
    std::vector<std::string> params;
    double T = 0.0;
    std::size_t N = 0;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    std::uint64_t b_index = 0;
    std::string basis;
    int degree = 0;
    int bins = 0;
    double picard_tol = 0.0;
    int picard_max_iter = 0;
    double ridge = 0.0;
    std::string z_scheme;
    std::string out;
    unsigned threads = 0;
    std::vector<double> x;
    std::vector<std::size_t> nodes;
    std::vector<int> envelopes;
    std::string suite;
};

// Each subcommand owns its copy of the shared flags, all bound to one Flags.
struct Options {
    std::map<std::string, std::vector<CLI::Option*>> by_name;
    void add(const std::string& name, CLI::Option* opt) { by_name[name].push_back(opt); }
    bool given(const std::string& name) const {
        const auto it = by_name.find(name);
        if (it == by_name.end()) return false;
        return std::any_of(it->second.begin(), it->second.end(), [](CLI::Option* opt) { return opt->count() > 0; });
    }
};

void add_common(CLI::App* sub, Flags& f, Options& o) {
    o.add("config", sub->add_option("--config", f.config, "JSON experiment config"));
    o.add("problem", sub->add_option("--problem", f.problem, "catalog problem name"));
    o.add("param", sub->add_option("--param", f.params, "catalog parameter override key=value (repeatable)"));
    o.add("T", sub->add_option("--T", f.T, "horizon"));
    o.add("N", sub->add_option("--N", f.N, "time steps"));
    o.add("paths", sub->add_option("--paths", f.paths, "Monte Carlo paths"));
    o.add("seed", sub->add_option("--seed", f.seed, "noise seed"));
    o.add("b-index", sub->add_option("--b-index", f.b_index, "index of the realised B path"));
    o.add("basis", sub->add_option("--basis", f.basis, "polynomial, piecewise-constant or local-polynomial"));
    o.add("degree", sub->add_option("--degree", f.degree, "basis degree"));
    o.add("bins", sub->add_option("--bins", f.bins, "bins per coordinate"));
    o.add("picard-tol", sub->add_option("--picard-tol", f.picard_tol, "Picard gap tolerance"));
    o.add("picard-max-iter", sub->add_option("--picard-max-iter", f.picard_max_iter, "Picard iteration cap"));
    o.add("ridge", sub->add_option("--ridge", f.ridge, "regression ridge"));
    o.add("z-scheme", sub->add_option("--z-scheme", f.z_scheme, "regression or finite-increment"));
    o.add("out", sub->add_option("--out", f.out, "output directory"));
    o.add("threads", sub->add_option("--threads", f.threads, "worker thread cap"));
}

ExperimentConfig resolve_config(const Flags& f, const Options& o) {
    ExperimentConfig c = o.given("config") ? load_config_file(f.config) : ExperimentConfig{};
    if (const char* env = std::getenv("RBDSDE_OUT"); env != nullptr && *env != '\0') c.out_dir = env;
    if (o.given("problem")) c.problem = f.problem;
    for (const auto& kvp : f.params) {
        const auto eq = kvp.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects key=value, got '" + kvp + "'");
        try {
            std::size_t used = 0;
            const std::string value = kvp.substr(eq + 1);
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            c.overrides[kvp.substr(0, eq)] = v;
        } catch (const std::logic_error&) {
            throw ConfigError("--param value is not a number: '" + kvp + "'");
        }
    }
    if (o.given("T")) c.T = f.T;
    if (o.given("N")) c.N = f.N;
    if (o.given("paths")) c.paths = f.paths;
    if (o.given("seed")) c.seed = f.seed;
    if (o.given("b-index")) c.b_index = f.b_index;
    if (o.given("basis")) {
        try {
            c.basis.kind = basis_kind_from_string(f.basis);
        } catch (const std::invalid_argument&) {
            throw ConfigError("--basis: unknown basis '" + f.basis + "'");
        }
    }
    if (o.given("degree")) c.basis.degree = f.degree;
    if (o.given("bins")) c.basis.bins = f.bins;
    if (o.given("picard-tol")) c.solver.picard_tol = f.picard_tol;
    if (o.given("picard-max-iter")) c.solver.picard_max_iter = f.picard_max_iter;
    if (o.given("ridge")) c.solver.ridge = f.ridge;
    if (o.given("z-scheme")) {
        try {
            c.solver.z_scheme = z_scheme_from_string(f.z_scheme);
        } catch (const std::invalid_argument&) {
            throw ConfigError("--z-scheme: unknown scheme '" + f.z_scheme + "'");
        }
    }
    if (o.given("out")) c.out_dir = f.out;
    if (o.given("x")) {
        c.field.x.clear();
        for (double v : f.x) c.field.x.push_back({v});
    }
    if (o.given("nodes")) c.field.nodes = f.nodes;
    if (o.given("envelopes")) c.field.envelopes = f.envelopes;

    if (c.N == 0) throw ConfigError("config field 'grid.N': must be positive");
    if (c.paths < 2) throw ConfigError("config field 'monte_carlo.paths': need at least two paths");
    try {
        c.solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config field 'solver': ") + e.what());
    }
    return c;
}

fs::path output_dir(const ExperimentConfig& cfg) {
    fs::path dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

void write_provenance(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg) {
    ExperimentConfig stored = cfg;
    stored.out_dir.clear();
    const json prov = {
        {"command", command},
        {"config_hash", hash_hex(config_hash(cfg))},
        {"seed", cfg.seed},
        {"b_index", cfg.b_index},
        {"versions",
         {{"rbdsde", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
        {"config", json::parse(render_config(stored))},
    };
    write_file(dir / (command + "_provenance.json"), prov.dump(2) + "\n");
}

std::string diagnostics_block(const std::map<std::string, double>& values) {
    json j = json::object();
    for (const auto& [k, v] : values) j[k] = std::isfinite(v) ? json(v) : json(format_double(v));
    return j.dump(2) + "\n";
}

int cmd_solve(const ExperimentConfig& cfg, std::ostream& out) {
    const ProblemSpec problem = build_problem(cfg);
    const auto noise = noise_for(problem, cfg.N, cfg.paths, cfg.seed, cfg.b_index);
    const auto forward = simulate_forward(problem, 0.0, problem.x0, noise);
    const PicardResult r = picard_solve(problem, forward, noise, cfg.basis, cfg.solver);

    const fs::path dir = output_dir(cfg);
    std::ostringstream sol, gaps;
    write_solution_csv(sol, r);
    write_gap_csv(gaps, r);
    write_file(dir / "solution.csv", sol.str());
    write_file(dir / "gaps.csv", gaps.str());

    const auto& s = r.solution;
    const double residual = skorokhod_residual(s);
    const double y_norm = std::sqrt(empirical_norm(s.Y, NormKind::S2));
    const double k_T = s.K.mean_at(noise.grid().num_steps());
    const auto inv = count_invariant_violations(s);
    const std::map<std::string, double> sk{
        {"skorokhod_residual", residual},
        {"flatness_bound", 1e-2 * y_norm * k_T},
        {"y_s2_norm", y_norm},
        {"mean_K_T", k_T},
        {"reflection_violations", static_cast<double>(inv.reflection)},
        {"minimal_push_violations", static_cast<double>(inv.minimal_push)},
        {"k_monotonicity_violations", static_cast<double>(inv.monotone_k)},
    };
    write_file(dir / "skorokhod.txt", diagnostics_block(sk));

    auto diag = s.diagnostics;
    diag["paths"] = static_cast<double>(cfg.paths);
    diag["steps"] = static_cast<double>(cfg.N);
    // Informative: iterate gaps against the majorant with M1 = 2 mu measured on the sample.
    try {
        const auto& gen = problem.gen;
        const double M = majorant_constant(cfg.majorant_c, gen.C(), gen.alpha(), problem.horizon);
        const auto mu = measure_moment_bound(problem, forward, cfg.majorant_c);
        const auto phi = majorant_sequence(gen.modulus, M, 2.0 * mu.mu, noise.grid(), r.iterations + 1);
        const auto gm = picard_gap_vs_majorant(r, phi);
        std::size_t within = 0;
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& e : gm.entries) {
            within += e.within ? 1 : 0;
            worst = std::max(worst, e.worst_excess);
        }
        diag["majorant_M"] = M;
        diag["majorant_M1"] = 2.0 * mu.mu;
        diag["majorant_entries"] = static_cast<double>(gm.entries.size());
        diag["majorant_entries_within"] = static_cast<double>(within);
        if (!gm.entries.empty()) diag["majorant_worst_excess"] = worst;
    } catch (const std::invalid_argument&) {
        diag["majorant_M"] = std::numeric_limits<double>::quiet_NaN();
    }
    write_file(dir / "solution_diagnostics.txt", diagnostics_block(diag));
    write_provenance(dir, "solve", cfg);

    out << "problem=" << problem.name << " Y0=" << format_double(s.diagnostics.at("Y0_mean"))
        << " stderr=" << format_double(s.diagnostics.at("Y0_stderr")) << " iterations=" << r.iterations
        << " converged=" << (r.converged ? 1 : 0) << " final_gap=" << format_double(r.gaps.back()) << '\n';
    return r.converged ? kExitOk : kExitNotConverged;
}

int cmd_field(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
    const ProblemSpec problem = build_problem(cfg);
    if (problem.gen.g_depends_on_z) {
        err << "error: the field pipeline needs g independent of z (problem '" << problem.name << "')\n";
        return kExitUnsupported;
    }
    std::vector<std::vector<double>> xs = cfg.field.x;
    if (xs.empty()) xs.push_back(problem.x0);
    std::vector<std::size_t> nodes = cfg.field.nodes;
    if (nodes.empty()) nodes = {0, cfg.N};
    for (std::size_t n : nodes)
        if (n > cfg.N) throw ConfigError("config field 'field.nodes': node " + std::to_string(n) + " beyond N");
    for (const auto& x : xs)
        if (x.size() != problem.d) throw ConfigError("config field 'field.x': point dimension differs from d");

    const auto noise = noise_for(problem, cfg.N, cfg.paths, cfg.seed, cfg.b_index);
    std::ostringstream csv;
    std::map<std::string, double> diag;
    bool converged = true;
    if (cfg.field.envelopes.empty()) {
        const auto u = evaluate_u_field(problem, xs, nodes, noise, cfg.basis, cfg.solver);
        write_field_csv(csv, u);
        converged = u.converged;
        double worst = 0.0;
        for (const auto& row : u.std_error)
            for (double e : row) worst = std::max(worst, e);
        diag["max_u_stderr"] = worst;
    } else {
        const auto rep = monotone_field_sequence(problem, cfg.field.envelopes, xs, nodes, noise, cfg.basis, cfg.solver);
        write_field_csv(csv, rep.u, rep.n_values, rep.lower, rep.upper);
        converged = rep.u.converged;
        for (std::size_t q = 0; q < rep.n_values.size(); ++q) {
            converged = converged && rep.lower[q].converged && rep.upper[q].converged;
            diag["bracket_width_" + std::to_string(rep.n_values[q])] = rep.bracket_width[q];
        }
        diag["monotonicity_violations"] = static_cast<double>(rep.monotonicity_violations);
        diag["width_violations"] = static_cast<double>(rep.width_violations);
        diag["bracket_violations"] = static_cast<double>(rep.bracket_violations);
    }
    diag["converged"] = converged ? 1.0 : 0.0;
    const fs::path dir = output_dir(cfg);
    write_file(dir / "field.csv", csv.str());
    write_file(dir / "field_diagnostics.txt", diagnostics_block(diag));
    write_provenance(dir, "field", cfg);
    out << "field points=" << xs.size() * nodes.size() << " converged=" << (converged ? 1 : 0) << '\n';
    return converged ? kExitOk : kExitNotConverged;
}

int cmd_verify(const std::string& suite, const ExperimentConfig& cfg, std::ostream& out) {
    SuiteReport rep;
    rep.suite = suite;
    try {
        rep = run_verify_suite(suite, cfg);
    } catch (const std::invalid_argument& e) {
        if (std::find(verify_suites().begin(), verify_suites().end(), suite) == verify_suites().end()) throw;
        rep.checks.push_back({"run", false, e.what()});
    } catch (const std::exception& e) {
        rep.checks.push_back({"run", false, e.what()});
    }
    const std::string text = rep.lines();
    out << text;
    const fs::path dir = output_dir(cfg);
    write_file(dir / ("verify_" + suite + ".txt"), text);
    write_provenance(dir, "verify_" + suite, cfg);
    return rep.passed() ? kExitOk : kExitFailed;
}

int cmd_compare(const ExperimentConfig& cfg, std::ostream& out) {
    std::ostringstream nodes, summary;
    nodes << "fixture,node,t,mean_violation,stderr_violation\n";
    summary << "fixture,y0_lower,y0_upper,iterations_lower,iterations_upper,max_mean_violation,violation_fraction,"
               "within\n";
    bool all = true;
    for (const auto& fx : comparison_fixtures()) {
        const auto noise = noise_for(fx.lower, cfg.N, cfg.paths, cfg.seed, cfg.b_index);
        const auto forward = simulate_forward(fx.lower, 0.0, fx.lower.x0, noise);
        const auto r = comparison_experiment(fx.lower, fx.upper, forward, noise, cfg.basis, cfg.solver);
        for (std::size_t i = 0; i < r.mean_violation.size(); ++i)
            nodes << fx.name << ',' << i << ',' << format_double(noise.grid().node(i)) << ','
                  << format_double(r.mean_violation[i]) << ',' << format_double(r.stderr_violation[i]) << '\n';
        summary << fx.name << ',' << format_double(r.y0_1) << ',' << format_double(r.y0_2) << ',' << r.iterations_1
                << ',' << r.iterations_2 << ',' << format_double(r.max_mean_violation) << ','
                << format_double(r.violation_fraction) << ',' << (r.within_tolerance ? 1 : 0) << '\n';
        out << (r.within_tolerance ? "PASS " : "FAIL ") << "compare/" << fx.name << ' '
            << kv("max_mean_violation", r.max_mean_violation) << '\n';
        all = all && r.within_tolerance;
    }
    const fs::path dir = output_dir(cfg);
    write_file(dir / "comparison.csv", nodes.str());
    write_file(dir / "comparison_summary.csv", summary.str());
    write_provenance(dir, "compare", cfg);
    return all ? kExitOk : kExitFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Reflected backward doubly stochastic differential equation solver and verification lab", "rbdsde"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Flags f;
    Options o;
    auto* solve = app.add_subcommand("solve", "Picard solve at x0; writes solution.csv, gaps.csv, skorokhod.txt");
    auto* field = app.add_subcommand("field", "u(t, x) on a space-time grid; writes field.csv");
    auto* verify = app.add_subcommand("verify", "run a verification suite; prints PASS/FAIL lines");
    auto* compare = app.add_subcommand("compare", "comparison experiment on the ordered fixtures");
    auto* cond = app.add_subcommand("condition-a", "alias for 'verify condition-a'");
    for (auto* sub : {solve, field, verify, compare, cond}) add_common(sub, f, o);
    o.add("x", field->add_option("--x", f.x, "space points (comma separated)")->delimiter(','));
    o.add("nodes", field->add_option("--nodes", f.nodes, "time node indices (comma separated)")->delimiter(','));
    o.add("envelopes", field->add_option("--envelopes", f.envelopes, "envelope indices n (comma separated)")->delimiter(','));
    verify->add_option("suite", f.suite, "condition-a, envelopes, comparison, skorokhod, doss or flow")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitParse;
    }

    ExperimentConfig cfg;
    try {
        cfg = resolve_config(f, o);
        if (o.given("threads")) set_thread_cap(f.threads);
        if (*solve) return cmd_solve(cfg, out);
        if (*field) return cmd_field(cfg, out, err);
        if (*compare) return cmd_compare(cfg, out);
        if (*cond) return cmd_verify("condition-a", cfg, out);
        if (*verify) {
            if (std::find(verify_suites().begin(), verify_suites().end(), f.suite) == verify_suites().end()) {
                err << "error: unknown verify suite '" << f.suite << "'\n";
                return kExitParse;
            }
            return cmd_verify(f.suite, cfg, out);
        }
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParse;
    } catch (const CatalogError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParse;
    } catch (const UnsupportedProblemError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUnsupported;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailed;
    }
    return kExitParse;
}

}  // namespace rbdsde
