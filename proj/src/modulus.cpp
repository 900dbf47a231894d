#include "rbdsde/modulus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "rbdsde/errors.hpp"

namespace rbdsde {

const double ModulusSpec::kDefaultLogDelta = std::exp(-2.0);
const double ModulusSpec::kDefaultLogLogDelta = std::exp(-3.0);

namespace {

double log_branch(double u) { return u * std::log(1.0 / u); }

double loglog_branch(double u) {
    const double l = std::log(1.0 / u);
    return u * l * std::log(l);
}

double integrate(const std::function<double(double)>& fn, double a, double b) {
    if (a == b) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, a, b, 15, 1e-12);
}

}  // namespace

ModulusSpec ModulusSpec::lipschitz(double slope) {
    if (!(slope >= 0.0) || !std::isfinite(slope))
        throw std::invalid_argument("Lipschitz modulus slope must be finite and non-negative");
    ModulusSpec m;
    m.variant_ = ModulusVariant::Lipschitz;
    m.parameter_ = slope;
    return m;
}

ModulusSpec ModulusSpec::log_modulus(double delta) {
    if (!(delta > 0.0) || delta > std::exp(-1.0))
        throw std::invalid_argument("log modulus needs 0 < delta <= e^-1");
    ModulusSpec m;
    m.variant_ = ModulusVariant::LogModulus;
    m.parameter_ = delta;
    return m;
}

ModulusSpec ModulusSpec::loglog_modulus(double delta) {
    if (!(delta > 0.0) || delta >= std::exp(-1.0))
        throw std::invalid_argument("log-log modulus needs 0 < delta < e^-1");
    ModulusSpec m;
    m.variant_ = ModulusVariant::LogLogModulus;
    m.parameter_ = delta;
    if (m.extension_slope() < 0.0)
        throw std::invalid_argument(
            "log-log modulus is decreasing at delta; choose delta with (L-1) ln L >= 1, L = ln(1/delta)");
    return m;
}

ModulusSpec ModulusSpec::tabulated(std::vector<std::pair<double, double>> table) {
    if (table.size() < 2) throw std::invalid_argument("tabulated modulus needs two points");
    if (table.front().first != 0.0) throw std::invalid_argument("tabulated modulus must start at u = 0");
    for (std::size_t i = 1; i < table.size(); ++i)
        if (!(table[i].first > table[i - 1].first))
            throw std::invalid_argument("tabulated modulus abscissae must increase");
    ModulusSpec m;
    m.variant_ = ModulusVariant::Tabulated;
    m.parameter_ = 0.0;
    m.table_ = std::move(table);
    return m;
}

ModulusSpec ModulusSpec::tabulate(const std::function<double(double)>& fn,
                                  std::span<const double> abscissae) {
    std::vector<std::pair<double, double>> table;
    if (abscissae.empty() || abscissae.front() != 0.0) table.emplace_back(0.0, fn(0.0));
    for (double u : abscissae) table.emplace_back(u, fn(u));
    return tabulated(std::move(table));
}

double ModulusSpec::extension_slope() const {
    const double l = std::log(1.0 / parameter_);
    switch (variant_) {
        case ModulusVariant::LogModulus:
            return l - 1.0;
        case ModulusVariant::LogLogModulus:
            return (l - 1.0) * std::log(l) - 1.0;
        default:
            return 0.0;
    }
}

double ModulusSpec::operator()(double /*t*/, double u) const {
    if (u < 0.0 || std::isnan(u)) throw std::invalid_argument("modulus evaluated at negative u");
    if (u == 0.0) return 0.0;
    switch (variant_) {
        case ModulusVariant::Lipschitz:
            return parameter_ * u;
        case ModulusVariant::LogModulus:
            if (u <= parameter_) return log_branch(u);
            return log_branch(parameter_) + extension_slope() * (u - parameter_);
        case ModulusVariant::LogLogModulus:
            if (u <= parameter_) return loglog_branch(u);
            return loglog_branch(parameter_) + extension_slope() * (u - parameter_);
        case ModulusVariant::Tabulated: {
            const auto it = std::upper_bound(
                table_.begin(), table_.end(), u,
                [](double v, const std::pair<double, double>& p) { return v < p.first; });
            const std::size_t hi =
                std::clamp<std::size_t>(static_cast<std::size_t>(it - table_.begin()), 1,
                                        table_.size() - 1);
            const auto& [u0, r0] = table_[hi - 1];
            const auto& [u1, r1] = table_[hi];
            return r0 + (r1 - r0) * (u - u0) / (u1 - u0);
        }
    }
    return 0.0;
}

std::string ModulusSpec::describe() const {
    std::ostringstream os;
    switch (variant_) {
        case ModulusVariant::Lipschitz: os << "lipschitz(" << parameter_ << ")"; break;
        case ModulusVariant::LogModulus: os << "log(delta=" << parameter_ << ")"; break;
        case ModulusVariant::LogLogModulus: os << "loglog(delta=" << parameter_ << ")"; break;
        case ModulusVariant::Tabulated: os << "tabulated(" << table_.size() << " points)"; break;
    }
    return os.str();
}

double eval_modulus(const ModulusSpec& rho, double t, double u) { return rho(t, u); }

ModulusSpec load_tabulated_modulus(std::istream& in) {
    std::vector<std::pair<double, double>> table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double u = 0.0, r = 0.0;
        if (!(ls >> u >> r)) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw ParseError("tabulated modulus: malformed line '" + line + "'");
        }
        first = false;
        table.emplace_back(u, r);
    }
    return ModulusSpec::tabulated(std::move(table));
}

AxiomReport verify_modulus_axioms(const ModulusSpec& rho, int samples, double tol, double horizon,
                                  double u_max) {
    if (samples < 3) throw std::invalid_argument("axiom check needs at least 3 samples");
    AxiomReport report;
    report.zero_at_zero = std::abs(rho(0.0, 0.0)) <= tol;

    // Half geometric (to resolve the behaviour near 0), half uniform.
    std::vector<double> u;
    const int geometric = samples / 2;
    const double lo = std::log(1e-12 * u_max), hi = std::log(u_max);
    for (int k = 0; k < geometric; ++k)
        u.push_back(std::exp(lo + (hi - lo) * k / std::max(1, geometric - 1)));
    for (int k = 1; k <= samples - geometric; ++k) u.push_back(u_max * k / (samples - geometric));
    std::sort(u.begin(), u.end());
    // Near-coincident samples only measure rounding in the secant slopes.
    u.erase(std::unique(u.begin(), u.end(), [](double a, double b) { return b - a <= 1e-9 * b; }),
            u.end());
    std::vector<double> r(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) r[k] = rho(0.0, u[k]);

    report.monotone = true;
    for (std::size_t k = 1; k < u.size(); ++k)
        if (r[k] < r[k - 1] - tol) report.monotone = false;

    auto defect = [&](std::size_t a, std::size_t b, std::size_t c) {
        const double s12 = (r[b] - r[a]) / (u[b] - u[a]);
        const double s23 = (r[c] - r[b]) / (u[c] - u[b]);
        return (s23 - s12) / std::max({1.0, std::abs(s12), std::abs(s23)});
    };
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 2; k < u.size(); ++k) worst = std::max(worst, defect(k - 2, k - 1, k));
    std::mt19937_64 gen(0x5eed);
    std::uniform_int_distribution<std::size_t> pick(0, u.size() - 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::array<std::size_t, 3> idx{pick(gen), pick(gen), pick(gen)};
        std::sort(idx.begin(), idx.end());
        if (idx[0] == idx[1] || idx[1] == idx[2]) continue;
        worst = std::max(worst, defect(idx[0], idx[1], idx[2]));
    }
    report.worst_concavity_defect = worst;
    report.concave = worst <= tol;

    report.integrable = true;
    const int tn = 64;
    for (double v : {1e-6 * u_max, 1e-3 * u_max, u_max}) {
        double integral = 0.0;
        for (int k = 0; k < tn; ++k) {
            const double t0 = horizon * k / tn, t1 = horizon * (k + 1) / tn;
            integral += 0.5 * (rho(t0, v) + rho(t1, v)) * (t1 - t0);
        }
        if (!std::isfinite(integral)) report.integrable = false;
    }
    return report;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Passes: return "passes";
        case Verdict::Fails: return "fails";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

UniquenessReport condition_a_uniqueness_check(const ModulusSpec& rho, double M, double horizon,
                                              std::span<const double> eps_ladder,
                                              const UniquenessOptions& options) {
    if (eps_ladder.size() < options.tail + 1)
        throw std::invalid_argument("eps ladder shorter than the examined tail");
    for (std::size_t k = 0; k < eps_ladder.size(); ++k) {
        if (!(eps_ladder[k] > 0.0)) throw std::invalid_argument("eps ladder must be positive");
        if (k > 0 && !(eps_ladder[k] < eps_ladder[k - 1]))
            throw std::invalid_argument("eps ladder must be strictly decreasing");
    }
    if (!(M > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("M and T must be positive");

    UniquenessReport report;
    report.eps.assign(eps_ladder.begin(), eps_ladder.end());

    // A modulus vanishing away from 0 makes both tests meaningless.
    const double a = std::log(eps_ladder.back()), b = std::log(std::max(options.u0, eps_ladder[0]));
    for (int k = 0; k <= 400; ++k) {
        const double u = std::exp(a + (b - a) * k / 400.0);
        if (!(rho(0.0, u) > 0.0)) {
            report.verdict = Verdict::Inconclusive;
            report.note = "modulus vanishes at u = " + std::to_string(u);
            return report;
        }
    }

    // (a) Osgood integral in s = ln u: int e^s / rho(e^s) ds.
    const std::function<double(double)> integrand = [&](double s) {
        const double u = std::exp(s);
        return u / rho(0.0, u);
    };
    double running = integrate(integrand, std::log(eps_ladder[0]), std::log(options.u0));
    report.osgood_integral.push_back(running);
    for (std::size_t k = 1; k < eps_ladder.size(); ++k) {
        running += integrate(integrand, std::log(eps_ladder[k]), std::log(eps_ladder[k - 1]));
        report.osgood_integral.push_back(running);
    }

    // (b) shoot u' = -M rho(t, u) backwards from u(T) = eps, in w = ln u.
    namespace ode = boost::numeric::odeint;
    using State = std::array<double, 1>;
    for (double eps : eps_ladder) {
        State w{std::log(eps)};
        auto rhs = [&](const State& x, State& dxds, double s) {
            // Trial stages of a rejected step may overshoot; keep u finite.
            const double u = std::exp(std::min(x[0], 600.0));
            dxds[0] = M * rho(horizon - s, u) / u;
        };
        ode::integrate_adaptive(ode::make_controlled(1e-12, 1e-10, ode::runge_kutta_dopri5<State>()),
                                rhs, w, 0.0, horizon, horizon * 1e-9);
        report.shooting_start.push_back(std::exp(w[0]));
    }

    const std::size_t n = eps_ladder.size();
    std::vector<double> increments, log_shrink;
    for (std::size_t k = n - options.tail; k < n; ++k) {
        const double decades = std::log10(eps_ladder[k - 1] / eps_ladder[k]);
        increments.push_back((report.osgood_integral[k] - report.osgood_integral[k - 1]) / decades);
        log_shrink.push_back(
            std::log(report.shooting_start[k] / report.shooting_start[k - 1]) / decades);
    }
    report.osgood_diverges = std::all_of(increments.begin(), increments.end(),
                                         [](double d) { return d > 0.0; });
    for (std::size_t k = 1; k < increments.size() && report.osgood_diverges; ++k)
        if (increments[k] < options.increment_ratio * increments[k - 1])
            report.osgood_diverges = false;

    const double max_log_shrink = std::log(options.shrink_per_decade);
    report.shooting_vanishes = std::all_of(log_shrink.begin(), log_shrink.end(),
                                           [&](double s) { return s <= max_log_shrink; });

    if (report.osgood_diverges && report.shooting_vanishes)
        report.verdict = Verdict::Passes;
    else if (!report.osgood_diverges && !report.shooting_vanishes)
        report.verdict = Verdict::Fails;
    else {
        report.verdict = Verdict::Inconclusive;
        report.note = report.osgood_diverges ? "Osgood integral diverges but shooting does not vanish"
                                             : "shooting vanishes but Osgood integral converges";
    }
    return report;
}

MajorantSequence::MajorantSequence(TimeGrid grid, double M, double M1,
                                   std::vector<std::vector<double>> phi)
    : grid_(std::move(grid)), M_(M), M1_(M1), phi_(std::move(phi)) {
    for (const auto& p : phi_)
        if (p.size() != grid_.num_nodes())
            throw std::invalid_argument("majorant member has wrong length");
}

double MajorantSequence::at(std::size_t n, std::size_t i) const {
    return phi_[std::min(n, phi_.size() - 1)][i];
}

bool MajorantSequence::non_increasing(double tol) const {
    for (std::size_t n = 1; n < phi_.size(); ++n)
        for (std::size_t i = 0; i < grid_.num_nodes(); ++i)
            if (phi_[n][i] > phi_[n - 1][i] + tol) return false;
    return true;
}

bool MajorantSequence::within_proof_regime() const {
    return !phi_.empty() && *std::max_element(phi_[0].begin(), phi_[0].end()) <= M1_;
}

MajorantSequence majorant_sequence(const ModulusSpec& rho, double M, double M1,
                                   const TimeGrid& grid, std::size_t n_max, double tol) {
    if (!(M > 0.0) || !(M1 > 0.0)) throw std::invalid_argument("M and M1 must be positive");
    const std::size_t nodes = grid.num_nodes();
    auto integrate_backward = [&](const std::vector<double>& arg) {
        std::vector<double> out(nodes, 0.0);
        double next = rho(grid.node(nodes - 1), arg[nodes - 1]);
        for (std::size_t i = nodes - 1; i-- > 0;) {
            const double here = rho(grid.node(i), arg[i]);
            out[i] = out[i + 1] + M * 0.5 * (here + next) * grid.dt(i);
            next = here;
        }
        return out;
    };
    std::vector<std::vector<double>> phi;
    phi.push_back(integrate_backward(std::vector<double>(nodes, M1)));
    for (std::size_t n = 0; n < n_max; ++n) {
        if (*std::max_element(phi.back().begin(), phi.back().end()) < tol) break;
        phi.push_back(integrate_backward(phi.back()));
    }
    return MajorantSequence(grid, M, M1, std::move(phi));
}

std::vector<double> horizon_partition(const ModulusSpec& rho, double M, const SegmentBudget& budget,
                                      double horizon, std::size_t max_segments) {
    if (!(M > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("M and T must be positive");
    std::vector<double> breakpoints{horizon};
    double previous = horizon;
    for (std::size_t p = 1; p <= max_segments; ++p) {
        const double mu = budget(p, previous);
        if (!(mu > 0.0) || !std::isfinite(mu))
            throw std::invalid_argument("segment budget must be positive");
        // Every built-in modulus is time independent, so the rho-mass of
        // [s, T_{p-1}] at level 2 mu is rho(2 mu) (T_{p-1} - s).
        const double density = rho(0.0, 2.0 * mu);
        const double target = mu / M;
        if (density * previous <= target) {
            breakpoints.push_back(0.0);
            return breakpoints;
        }
        previous -= target / density;
        breakpoints.push_back(previous);
    }
    throw NonTerminationError("horizon partition did not reach 0 within " +
                              std::to_string(max_segments) + " segments");
}

double majorant_constant(double c, double C, double alpha, double horizon) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(C > 0.0) || !(c > 0.0)) throw std::invalid_argument("c and C must be positive");
    const double log_m = std::max(std::log(c) + c * horizon,
                                  std::log((1.0 - alpha) / C + 1.0) + C * horizon / (1.0 - alpha));
    // Saturate instead of overflowing for alpha close to 1.
    const double m = std::exp(log_m);
    return std::isfinite(m) ? m : std::numeric_limits<double>::max();
}

}  // namespace rbdsde
