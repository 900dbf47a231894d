#include "rbdsde/generators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>

#include "rbdsde/errors.hpp"
#include "rbdsde/expression.hpp"

namespace rbdsde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    return std::sqrt(s);
}

double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

std::map<std::string, double> resolve(const std::string& name, std::map<std::string, double> defaults,
                                      const std::map<std::string, double>& overrides) {
    for (const auto& [key, value] : overrides) {
        auto it = defaults.find(key);
        if (it == defaults.end())
            throw CatalogError("problem '" + name + "' has no parameter '" + key + "'");
        it->second = value;
    }
    return defaults;
}

void brownian_forward(ProblemSpec& p, double sigma) {
    p.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    p.diffusion = [sigma](std::span<const double>, std::span<double> out) { out[0] = sigma; };
}

ProblemSpec paper_1_4(const std::map<std::string, double>& prm) {
    const double C = prm.at("C"), alpha = prm.at("alpha"), T = prm.at("T");
    if (!(C > 0.0) || !(alpha > 0.0 && alpha < 1.0) || !(T > 0.0))
        throw CatalogError("paper-1-4 needs C > 0, 0 < alpha < 1, T > 0");
    const double scale = 1.0 / std::pow(T, 0.25);
    const double fz = std::sqrt(C / 2.0);
    const double gz = prm.at("g_uses_z") != 0.0 ? std::sqrt(alpha / 2.0) : 0.0;

    ProblemSpec p;
    p.name = "paper-1-4";
    p.horizon = T;
    p.x0 = {prm.at("x0")};
    brownian_forward(p, prm.at("sigma"));

    auto& g = p.gen;
    g.f = [=](double, std::span<const double>, double y, std::span<const double> z) {
        return std::exp(-std::abs(y)) * scale + fz * z[0];
    };
    g.g = [=](double, std::span<const double>, double y, std::span<const double> z, std::span<double> out) {
        out[0] = std::exp(-std::abs(y)) * scale + gz * z[0];
    };
    g.g_depends_on_z = gz != 0.0;
    // |e^-|a| - e^-|b|| <= |a - b|, and (u + v)^2 <= 2u^2 + 2v^2.
    g.modulus = ModulusSpec::lipschitz(2.0 * scale * scale);
    g.modulus.z_lipschitz = C;
    g.modulus.alpha = alpha;
    g.growth_phi = [=](double) { return scale; };
    g.growth_constant = std::max(C, fz);
    g.separable = SeparableForm{
        [=](double y) { return std::exp(-std::abs(y)) * scale; },
        [=](double, std::span<const double>, std::span<const double> z) { return fz * z[0]; }};

    p.terminal = [](std::span<const double> x) { return std::abs(x[0]); };
    p.obstacle = [](double, std::span<const double> x) { return std::abs(x[0]); };
    p.lipschitz_constant = std::max(1.0, std::abs(prm.at("sigma")));
    p.parameters = prm;
    return p;
}

ProblemSpec lipschitz_linear(const std::map<std::string, double>& prm) {
    const double a = prm.at("a"), b = prm.at("b"), level = prm.at("level");
    ProblemSpec p;
    p.name = "lipschitz-linear";
    p.horizon = prm.at("T");
    p.x0 = {prm.at("x0")};
    brownian_forward(p, prm.at("sigma"));

    auto& g = p.gen;
    g.f = [=](double, std::span<const double>, double y, std::span<const double> z) { return a * y + b * z[0]; };
    g.modulus = ModulusSpec::lipschitz(2.0 * a * a);
    g.modulus.z_lipschitz = 2.0 * b * b;
    g.growth_constant = std::max(std::abs(a), std::abs(b));
    g.separable = SeparableForm{
        [=](double y) { return a * y; },
        [=](double, std::span<const double>, std::span<const double> z) { return b * z[0]; }};

    p.terminal = [=](std::span<const double> x) { return std::max(x[0], level); };
    p.obstacle = [=](double, std::span<const double>) { return level; };
    p.lipschitz_constant = std::max(1.0, std::abs(prm.at("sigma")));
    p.obstacle_growth_c = std::max(1.0, std::abs(level));
    p.parameters = prm;
    return p;
}

ProblemSpec american_put_like(const std::map<std::string, double>& prm) {
    const double r = prm.at("r"), s = prm.at("sigma"), kappa = prm.at("kappa");
    ProblemSpec p;
    p.name = "american-put-like";
    p.horizon = prm.at("T");
    p.x0 = {prm.at("x0")};
    p.drift = [=](std::span<const double> x, std::span<double> out) { out[0] = r * x[0]; };
    p.diffusion = [=](std::span<const double> x, std::span<double> out) { out[0] = s * x[0]; };

    auto& g = p.gen;
    g.f = [=](double, std::span<const double>, double y, std::span<const double>) { return -r * y; };
    g.modulus = ModulusSpec::lipschitz(r * r);
    g.modulus.z_lipschitz = 0.0;
    g.growth_constant = std::abs(r);
    g.separable = SeparableForm{[=](double y) { return -r * y; },
                                [](double, std::span<const double>, std::span<const double>) { return 0.0; }};

    auto payoff = [=](std::span<const double> x) { return std::max(kappa - x[0], 0.0); };
    p.terminal = payoff;
    p.obstacle = [=](double, std::span<const double> x) { return payoff(x); };
    p.lipschitz_constant = std::max({1.0, std::abs(r), std::abs(s)});
    p.obstacle_growth_c = std::max(1.0, std::abs(kappa));
    p.sample_radius = 1.0;
    p.parameters = prm;
    return p;
}

ProblemSpec log_modulus_problem(const std::map<std::string, double>& prm) {
    const double delta = prm.at("delta"), beta = prm.at("beta");
    const auto modulus = ModulusSpec::log_modulus(delta);  // validates delta
    const double cap = std::sqrt(delta);
    // omega(r)^2 = rho(r^2) for r <= sqrt(delta); omega is concave, hence
    // subadditive, so |omega(a) - omega(b)|^2 <= rho(|a - b|^2).
    auto omega = [](double r) { return r > 0.0 ? r * std::sqrt(std::log(1.0 / (r * r))) : 0.0; };
    auto profile = [=](double y) { return -omega(std::min(std::abs(y), cap)); };

    ProblemSpec p;
    p.name = "log-modulus";
    p.horizon = prm.at("T");
    p.x0 = {prm.at("x0")};
    brownian_forward(p, prm.at("sigma"));

    auto& g = p.gen;
    g.f = [=](double, std::span<const double>, double y, std::span<const double>) { return profile(y); };
    g.g = [=](double, std::span<const double>, double y, std::span<const double>, std::span<double> out) {
        out[0] = beta * std::sin(y);
    };
    g.modulus = modulus;
    g.modulus.z_lipschitz = 1.0;
    g.modulus.alpha = 0.5;
    g.growth_phi = [=](double) { return omega(cap); };
    g.separable = SeparableForm{profile,
                                [](double, std::span<const double>, std::span<const double>) { return 0.0; }};

    p.terminal = [](std::span<const double> x) { return std::max(x[0], 0.0); };
    p.obstacle = [](double, std::span<const double> x) { return std::max(x[0], 0.0); };
    p.lipschitz_constant = std::max(1.0, std::abs(prm.at("sigma")));
    p.parameters = prm;
    return p;
}

}  // namespace

double ProblemSpec::obstacle_at(double t, std::span<const double> x) const {
    return obstacle ? obstacle(t, x) : -kInf;
}

std::vector<std::string> catalog_names() {
    return {"american-put-like", "lipschitz-linear", "log-modulus", "paper-1-4"};
}

std::map<std::string, double> catalog_defaults(const std::string& name) {
    if (name == "paper-1-4")
        return {{"C", 2.0}, {"alpha", 0.5}, {"T", 1.0}, {"x0", 0.0}, {"sigma", 1.0}, {"g_uses_z", 1.0}};
    if (name == "lipschitz-linear")
        return {{"a", 0.1}, {"b", 0.2}, {"level", -0.25}, {"T", 1.0}, {"x0", 0.0}, {"sigma", 1.0}};
    if (name == "american-put-like")
        return {{"r", 0.06}, {"sigma", 0.2}, {"kappa", 1.0}, {"T", 1.0}, {"x0", 1.0}};
    if (name == "log-modulus")
        return {{"delta", std::exp(-2.0)}, {"beta", 0.2}, {"T", 1.0}, {"x0", 0.0}, {"sigma", 1.0}};
    throw CatalogError("unknown problem '" + name + "'");
}

ProblemSpec builtin_problem(const std::string& name, const std::map<std::string, double>& overrides) {
    const auto prm = resolve(name, catalog_defaults(name), overrides);
    if (!(prm.at("T") > 0.0)) throw CatalogError("problem horizon T must be positive");
    if (name == "paper-1-4") return paper_1_4(prm);
    if (name == "lipschitz-linear") return lipschitz_linear(prm);
    if (name == "american-put-like") return american_put_like(prm);
    return log_modulus_problem(prm);
}

ProblemSpec expression_problem(const ExpressionProblem& def) {
    auto parse = [&](const std::string& text) {
        auto e = Expression::parse(text, def.parameters);
        if (e.max_x_index() > 1 || e.max_z_index() > 1)
            throw ParseError("expression '" + text + "': only one-dimensional problems are supported");
        return e;
    };
    const auto f = parse(def.f);
    const auto l = parse(def.terminal);
    const auto b = parse(def.drift);
    const auto sigma = parse(def.diffusion);

    ProblemSpec p;
    p.name = "expression";
    p.horizon = def.horizon;
    p.x0 = {def.x0};
    p.drift = [b](std::span<const double> x, std::span<double> out) { out[0] = b(0.0, x, 0.0, {}); };
    p.diffusion = [sigma](std::span<const double> x, std::span<double> out) {
        out[0] = sigma(0.0, x, 0.0, {});
    };
    p.gen.f = [f](double t, std::span<const double> x, double y, std::span<const double> z) {
        return f(t, x, y, z);
    };
    p.gen.growth_phi = [f](double t) {
        const double zero[1] = {0.0};
        return std::abs(f(t, zero, 0.0, zero));
    };
    if (!def.g.empty()) {
        const auto g = parse(def.g);
        p.gen.g = [g](double t, std::span<const double> x, double y, std::span<const double> z,
                      std::span<double> out) { out[0] = g(t, x, y, z); };
        p.gen.g_depends_on_z = g.max_z_index() > 0;
    }
    p.gen.modulus = def.modulus;
    p.terminal = [l](std::span<const double> x) { return l(0.0, x, 0.0, {}); };
    if (!def.obstacle.empty()) {
        const auto h = parse(def.obstacle);
        p.obstacle = [h](double t, std::span<const double> x) { return h(t, x, 0.0, {}); };
    }
    p.lipschitz_constant = def.lipschitz_constant;
    p.obstacle_growth_c = def.obstacle_growth_c;
    p.obstacle_growth_p = def.obstacle_growth_p;
    p.parameters = def.parameters;
    return p;
}

// ---------------------------------------------------------------------------

EnvelopeApproximant::EnvelopeApproximant(GeneratorSpec base, int n, EnvelopeDirection direction,
                                         EnvelopeGrid grid)
    : base_(std::move(base)), n_(n), direction_(direction), grid_(grid) {
    if (!base_.f) throw std::invalid_argument("envelope needs a driver f");
    if (static_cast<double>(n) < std::ceil(base_.C() - 1e-12))
        throw std::invalid_argument("envelope order n must be at least ceil(C)");
    if (!(grid_.range > 0.0) || !(grid_.step > 0.0))
        throw std::invalid_argument("envelope grid needs positive range and step");
    points_ = static_cast<std::size_t>(std::llround(2.0 * grid_.range / grid_.step)) + 1;
    if (!base_.separable) return;

    const double nn = n_;
    const bool lower = direction_ == EnvelopeDirection::Lower;
    // lower: u <= y gives n y + (p - n u), u >= y gives -n y + (p + n u); minimise.
    // upper: u <= y gives -n y + (p + n u), u >= y gives n y + (p - n u); maximise.
    const double left_sign = lower ? -1.0 : 1.0;
    auto better = [lower](double a, double b) { return lower ? a < b : a > b; };
    std::vector<double> p(points_);
    for (std::size_t j = 0; j < points_; ++j) p[j] = base_.separable->y_part(u(j));

    prefix_.resize(points_);
    prefix_at_.resize(points_);
    for (std::size_t j = 0; j < points_; ++j) {
        const double v = p[j] + left_sign * nn * u(j);
        if (j == 0 || better(v, prefix_[j - 1])) {
            prefix_[j] = v;
            prefix_at_[j] = j;
        } else {
            prefix_[j] = prefix_[j - 1];
            prefix_at_[j] = prefix_at_[j - 1];
        }
    }
    suffix_.resize(points_);
    suffix_at_.resize(points_);
    for (std::size_t j = points_; j-- > 0;) {
        const double v = p[j] - left_sign * nn * u(j);
        if (j + 1 == points_ || better(v, suffix_[j + 1])) {
            suffix_[j] = v;
            suffix_at_[j] = j;
        } else {
            suffix_[j] = suffix_[j + 1];
            suffix_at_[j] = suffix_at_[j + 1];
        }
    }
}

EnvelopeValue EnvelopeApproximant::evaluate(double t, std::span<const double> x, double y,
                                            std::span<const double> z) const {
    if (!(std::abs(y) <= grid_.range))
        throw RangeError("envelope evaluated at y = " + std::to_string(y) + " outside [-R, R]");
    if (!base_.separable) return reference(t, x, y, z);

    const bool lower = direction_ == EnvelopeDirection::Lower;
    const double nn = n_;
    const double sign = lower ? 1.0 : -1.0;  // +n y for the u <= y branch of lower

    auto jl = static_cast<std::size_t>(std::clamp((y + grid_.range) / grid_.step, 0.0,
                                                  static_cast<double>(points_ - 1)));
    while (jl > 0 && u(jl) > y) --jl;
    while (jl + 1 < points_ && u(jl + 1) <= y) ++jl;

    EnvelopeValue best{base_.separable->y_part(y), y, false};
    std::size_t best_index = points_;  // y itself
    auto consider = [&](double v, std::size_t j) {
        if (lower ? v < best.value : v > best.value) {
            best.value = v;
            best_index = j;
        }
    };
    if (u(jl) <= y) consider(sign * nn * y + prefix_[jl], prefix_at_[jl]);
    const std::size_t ju = u(jl) < y ? jl + 1 : jl;
    if (ju < points_) consider(-sign * nn * y + suffix_[ju], suffix_at_[ju]);

    if (best_index < points_) {
        best.argmin = u(best_index);
        best.truncated = best_index == 0 || best_index + 1 == points_;
    }
    best.value += base_.separable->rest(t, x, z);
    return best;
}

EnvelopeValue EnvelopeApproximant::reference(double t, std::span<const double> x, double y,
                                             std::span<const double> z) const {
    if (!(std::abs(y) <= grid_.range))
        throw RangeError("envelope evaluated at y = " + std::to_string(y) + " outside [-R, R]");
    const bool lower = direction_ == EnvelopeDirection::Lower;
    const double nn = lower ? n_ : -n_;
    EnvelopeValue best{base_.f(t, x, y, z), y, false};
    std::size_t best_index = points_;
    for (std::size_t j = 0; j < points_; ++j) {
        const double v = base_.f(t, x, u(j), z) + nn * std::abs(y - u(j));
        if (lower ? v < best.value : v > best.value) {
            best.value = v;
            best_index = j;
        }
    }
    if (best_index < points_) {
        best.argmin = u(best_index);
        best.truncated = best_index == 0 || best_index + 1 == points_;
    }
    return best;
}

double EnvelopeApproximant::grid_tol(double t, std::span<const double> x, double y,
                                     std::span<const double> z) const {
    const double h = grid_.step;
    const double at = evaluate(t, x, y, z).argmin;
    double local = 0.0;
    for (double c : {at, y})
        for (double s : {-h, 0.0}) {
            const double a = std::clamp(c + s, -grid_.range, grid_.range - h);
            local = std::max(local, std::abs(base_.f(t, x, a + h, z) - base_.f(t, x, a, z)) / h);
        }
    return (n_ + local) * h;
}

GeneratorSpec EnvelopeApproximant::as_generator() const {
    GeneratorSpec g = base_;
    auto self = std::make_shared<const EnvelopeApproximant>(*this);
    g.f = [self](double t, std::span<const double> x, double y, std::span<const double> z) {
        return (*self)(t, x, y, z);
    };
    g.separable.reset();
    // |f_n(y1, z1) - f_n(y2, z2)|^2 <= 2 n^2 |dy|^2 + 2 C |dz|^2
    g.modulus = ModulusSpec::lipschitz(2.0 * n_ * n_);
    g.modulus.z_lipschitz = 2.0 * base_.C();
    g.modulus.alpha = base_.alpha();
    return g;
}

EnvelopeApproximant lipschitz_envelope(const GeneratorSpec& base, int n, EnvelopeDirection direction,
                                       EnvelopeGrid grid) {
    return EnvelopeApproximant(base, n, direction, grid);
}

std::vector<EnvelopeSample> sample_arguments(const ProblemSpec& problem, std::size_t count, double y_range,
                                             std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<EnvelopeSample> out(count);
    for (auto& s : out) {
        s.t = problem.horizon * unit(gen);
        s.x.resize(problem.d);
        for (std::size_t c = 0; c < problem.d; ++c)
            s.x[c] = problem.x0[c] + problem.sample_radius * (2.0 * unit(gen) - 1.0);
        s.y = y_range * (2.0 * unit(gen) - 1.0);
        s.z.resize(problem.d);
        for (auto& v : s.z) v = normal(gen);
    }
    return out;
}

EnvelopePropertyReport envelope_property_check(const GeneratorSpec& base, std::span<const int> n_values,
                                               std::span<const EnvelopeSample> samples, EnvelopeGrid grid,
                                               std::size_t reference_stride, std::uint64_t seed) {
    if (n_values.size() < 2) throw std::invalid_argument("envelope check needs at least two n values");
    for (std::size_t k = 1; k < n_values.size(); ++k)
        if (n_values[k] <= n_values[k - 1]) throw std::invalid_argument("n values must increase");

    EnvelopePropertyReport rep;
    rep.n_values.assign(n_values.begin(), n_values.end());
    rep.samples = samples.size();
    const std::size_t K = n_values.size();
    rep.lower_error.assign(K, 0.0);
    rep.upper_error.assign(K, 0.0);

    std::vector<EnvelopeApproximant> lower, upper;
    for (int n : n_values) {
        lower.emplace_back(base, n, EnvelopeDirection::Lower, grid);
        upper.emplace_back(base, n, EnvelopeDirection::Upper, grid);
    }

    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> shift(-0.5, 0.5);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double C = base.C();
    const double K_growth = base.growth_K();

    auto bump = [](double& worst, double excess) { worst = std::max(worst, excess); };

    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& a = samples[s];
        // Perturbed partners for the Lipschitz checks.
        std::vector<double> x2 = a.x, z2 = a.z;
        for (auto& v : x2) v += shift(gen);
        const double y2 = std::clamp(a.y + shift(gen), -grid.range, grid.range);
        for (auto& v : z2) v += normal(gen);
        if (std::abs(a.y) > grid.range) {
            rep.range_error = true;
            ++rep.truncated;
            continue;
        }

        const double f0 = base.f(a.t, a.x, a.y, a.z);
        std::vector<EnvelopeValue> lo(K), up(K);
        bool truncated = false;
        for (std::size_t k = 0; k < K; ++k) {
            lo[k] = lower[k].evaluate(a.t, a.x, a.y, a.z);
            up[k] = upper[k].evaluate(a.t, a.x, a.y, a.z);
            truncated = truncated || lo[k].truncated || up[k].truncated;
        }
        if (truncated) {
            rep.range_error = true;
            ++rep.truncated;
            continue;
        }

        const double scale = 1.0 + std::abs(f0);
        const double bound = a.x.empty() ? 0.0 : norm(a.x);
        const double growth = base.phi(a.t) + K_growth * (bound + std::abs(a.y) + norm(a.z));
        std::vector<double> tol(K);
        for (std::size_t k = 0; k < K; ++k) {
            tol[k] = std::max(lower[k].grid_tol(a.t, a.x, a.y, a.z), upper[k].grid_tol(a.t, a.x, a.y, a.z));

            // (i) exact up to rounding since y is a candidate
            const double sw = std::max(lo[k].value - f0, f0 - up[k].value);
            bump(rep.worst_sandwich, sw);
            if (sw > 1e-12 * scale) rep.sandwich = false;

            // (ii)
            if (k > 0) {
                const double mono = std::max(lo[k - 1].value - lo[k].value, up[k].value - up[k - 1].value);
                bump(rep.worst_monotone, mono);
                if (mono > 1e-10 * scale) rep.monotone = false;
            }

            // (iii)
            const double g = std::max(std::abs(lo[k].value), std::abs(up[k].value)) - growth;
            bump(rep.worst_growth, g);
            if (g > 1e-10 * scale) rep.growth = false;

            // (iv) n-Lipschitz in (x, y), same t and z
            const double dxy = std::sqrt(dist2(a.x, x2)) + std::abs(a.y - y2);
            for (const auto* env : {&lower[k], &upper[k]}) {
                const auto v1 = env->evaluate(a.t, a.x, a.y, a.z);
                const auto v2 = env->evaluate(a.t, x2, y2, a.z);
                if (v2.truncated) {
                    rep.range_error = true;
                    continue;
                }
                const double ex = std::abs(v1.value - v2.value) - n_values[k] * dxy;
                bump(rep.worst_lipschitz_xy, ex);
                if (ex > 2.0 * tol[k]) rep.lipschitz_xy = false;

                // (v) C-Lipschitz (squared) in z
                const auto v3 = env->evaluate(a.t, a.x, a.y, z2);
                if (v3.truncated) {
                    rep.range_error = true;
                    continue;
                }
                const double dz = (v1.value - v3.value) * (v1.value - v3.value) - C * dist2(a.z, z2);
                bump(rep.worst_lipschitz_z, dz);
                if (dz > 1e-10 * scale * scale) rep.lipschitz_z = false;
            }

            rep.lower_error[k] = std::max(rep.lower_error[k], std::abs(lo[k].value - f0));
            rep.upper_error[k] = std::max(rep.upper_error[k], std::abs(up[k].value - f0));
            // (vi) pointwise errors shrink with n
            if (k > 0) {
                if (std::abs(lo[k].value - f0) > std::abs(lo[k - 1].value - f0) + tol[k]) rep.convergence = false;
                if (std::abs(up[k].value - f0) > std::abs(up[k - 1].value - f0) + tol[k]) rep.convergence = false;
            }
        }

        if (reference_stride > 0 && s % reference_stride == 0) {
            for (std::size_t k = 0; k < K; ++k)
                for (const auto* env : {&lower[k], &upper[k]}) {
                    const double diff = std::abs(env->evaluate(a.t, a.x, a.y, a.z).value -
                                                 env->reference(a.t, a.x, a.y, a.z).value);
                    bump(rep.worst_reference, diff);
                    if (diff > tol[k]) rep.matches_reference = false;
                }
        }
    }
    if (rep.lower_error.back() > rep.lower_error.front() + 1e-12 ||
        rep.upper_error.back() > rep.upper_error.front() + 1e-12)
        rep.convergence = false;
    return rep;
}

GeneratorBoundReport check_generator_bounds(const ProblemSpec& problem, std::size_t samples, double tol,
                                            std::uint64_t seed) {
    const auto& gen = problem.gen;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    GeneratorBoundReport rep;
    rep.samples = samples;
    rep.worst_f_excess = rep.worst_g_excess = -kInf;
    const std::size_t d = problem.d;
    std::vector<double> x(d), z1(d), z2(d), g1(gen.ell), g2(gen.ell);
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = problem.horizon * unit(rng);
        for (std::size_t c = 0; c < d; ++c)
            x[c] = problem.x0[c] + problem.sample_radius * (2.0 * unit(rng) - 1.0);
        const double y1 = 10.0 * unit(rng) - 5.0;
        // dy spread over many decades so that the behaviour of rho near 0 is probed
        const double dy = (unit(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, -8.0 + 8.7 * unit(rng));
        const double y2 = y1 + dy;
        const bool same_z = unit(rng) < 1.0 / 3.0;
        const double zscale = std::pow(10.0, -4.0 + 4.5 * unit(rng));
        for (std::size_t c = 0; c < d; ++c) {
            z1[c] = normal(rng);
            z2[c] = same_z ? z1[c] : z1[c] + zscale * normal(rng);
        }
        const double rho = gen.modulus(t, dy * dy);
        const double dz2 = dist2(z1, z2);

        const double df = gen.f(t, x, y1, z1) - gen.f(t, x, y2, z2);
        const double fe = df * df - rho - gen.C() * dz2;
        rep.worst_f_excess = std::max(rep.worst_f_excess, fe);
        if (fe > tol) rep.f_ok = false;

        if (gen.has_g()) {
            gen.g(t, x, y1, z1, g1);
            gen.g(t, x, y2, z2, g2);
            const double ge = dist2(g1, g2) - rho - gen.alpha() * dz2;
            rep.worst_g_excess = std::max(rep.worst_g_excess, ge);
            if (ge > tol) rep.g_ok = false;
        }
    }
    return rep;
}

ProblemInvariantReport check_problem_invariants(const ProblemSpec& problem, std::size_t samples,
                                                std::uint64_t seed, double tol) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    ProblemInvariantReport rep;
    const std::size_t d = problem.d;
    const double L = problem.lipschitz_constant;
    auto draw_x = [&](std::vector<double>& x) {
        for (std::size_t c = 0; c < d; ++c)
            x[c] = problem.x0[c] + problem.sample_radius * (2.0 * unit(rng) - 1.0);
    };
    std::vector<double> x1(d), x2(d), b1(d), b2(d), s1(d * d), s2(d * d), zero(d, 0.0), z(d);
    std::vector<double> ga(problem.gen.ell), gb(problem.gen.ell);
    for (std::size_t s = 0; s < samples; ++s) {
        draw_x(x1);
        draw_x(x2);
        const double t = problem.horizon * unit(rng);
        const double T = problem.horizon;

        if (problem.has_obstacle() && problem.obstacle(T, x1) > problem.terminal(x1) + tol)
            rep.obstacle_below_terminal = false;

        const double dx = std::sqrt(dist2(x1, x2));
        problem.drift(x1, b1);
        problem.drift(x2, b2);
        problem.diffusion(x1, s1);
        problem.diffusion(x2, s2);
        const double dl = std::abs(problem.terminal(x1) - problem.terminal(x2));
        if (std::sqrt(dist2(b1, b2)) > L * dx + tol || std::sqrt(dist2(s1, s2)) > L * dx + tol ||
            dl > L * dx + tol)
            rep.coefficients_lipschitz = false;

        if (problem.has_obstacle()) {
            const double h = std::abs(problem.obstacle(t, x1));
            if (h > problem.obstacle_growth_c * (1.0 + std::pow(norm(x1), problem.obstacle_growth_p)) + tol)
                rep.obstacle_growth = false;
        }

        const double y = 20.0 * unit(rng) - 10.0;
        const double f0 = std::abs(problem.gen.f(t, zero, y, zero));
        if (f0 > problem.gen.phi(t) + problem.gen.growth_K() * std::abs(y) + tol) rep.f_growth = false;

        if (problem.gen.has_g() && !problem.gen.g_depends_on_z) {
            for (auto& v : z) v = normal(rng);
            problem.gen.g(t, x1, y, zero, ga);
            problem.gen.g(t, x1, y, z, gb);
            if (std::sqrt(dist2(ga, gb)) > tol) rep.g_z_free = false;
        }
    }
    return rep;
}

}  // namespace rbdsde
