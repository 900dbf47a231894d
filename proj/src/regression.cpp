#include "rbdsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rbdsde/errors.hpp"
#include "rbdsde/parallel.hpp"

namespace rbdsde {

namespace {

// Multi-indices of total degree <= degree in `dims` variables.
void multi_indices(std::size_t dims, int degree, std::vector<int>& current, std::vector<std::vector<int>>& out) {
    if (current.size() == dims) {
        out.push_back(current);
        return;
    }
    int used = 0;
    for (int e : current) used += e;
    for (int e = 0; e + used <= degree; ++e) {
        current.push_back(e);
        multi_indices(dims, degree, current, out);
        current.pop_back();
    }
}

void legendre(double x, int degree, double* p) {
    p[0] = 1.0;
    if (degree >= 1) p[1] = x;
    for (int k = 1; k < degree; ++k) p[k + 1] = ((2.0 * k + 1.0) * x * p[k] - k * p[k - 1]) / (k + 1.0);
}

}  // namespace

std::string to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::Polynomial: return "polynomial";
        case BasisKind::PiecewiseConstant: return "piecewise-constant";
        case BasisKind::LocalPolynomial: return "local-polynomial";
    }
    return "polynomial";
}

BasisKind basis_kind_from_string(const std::string& name) {
    if (name == "polynomial") return BasisKind::Polynomial;
    if (name == "piecewise-constant") return BasisKind::PiecewiseConstant;
    if (name == "local-polynomial") return BasisKind::LocalPolynomial;
    throw std::invalid_argument("unknown basis '" + name + "'");
}

std::string describe(const RegressionBasis& basis) {
    switch (basis.kind) {
        case BasisKind::Polynomial: return "polynomial(degree=" + std::to_string(basis.degree) + ")";
        case BasisKind::PiecewiseConstant: return "piecewise-constant(bins=" + std::to_string(basis.bins) + ")";
        case BasisKind::LocalPolynomial:
            return "local-polynomial(bins=" + std::to_string(basis.bins) + ", degree=" + std::to_string(basis.degree) +
                   ")";
    }
    return {};
}

Regression::Regression(std::span<const double> state, std::size_t dim, const RegressionBasis& basis, double ridge)
    : dim_(dim), basis_(basis) {
    if (dim == 0 || state.size() % dim != 0) throw std::invalid_argument("state size is not a multiple of dim");
    if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be non-negative");
    if (basis.kind != BasisKind::PiecewiseConstant && basis.degree < 0)
        throw std::invalid_argument("basis degree must be non-negative");
    if (basis.kind != BasisKind::Polynomial && basis.bins < 1)
        throw std::invalid_argument("basis needs at least one bin");
    paths_ = state.size() / dim;

    std::vector<double> lo(dim, INFINITY), hi(dim, -INFINITY);
    for (std::size_t k = 0; k < paths_; ++k)
        for (std::size_t c = 0; c < dim; ++c) {
            lo[c] = std::min(lo[c], state[k * dim + c]);
            hi[c] = std::max(hi[c], state[k * dim + c]);
        }
    std::vector<std::size_t> active;
    for (std::size_t c = 0; c < dim; ++c) {
        const double scale = std::max({1.0, std::abs(lo[c]), std::abs(hi[c])});
        if (paths_ > 0 && hi[c] - lo[c] > 1e-12 * scale) active.push_back(c);
    }
    active_ = active.size();

    const int degree = basis.kind == BasisKind::PiecewiseConstant ? 0 : basis.degree;
    if (degree > 15 || active_ > 16) throw std::invalid_argument("basis degree or state dimension too large");
    std::vector<int> scratch;
    multi_indices(active_, degree, scratch, exponents_);
    local_ = exponents_.size();
    cells_ = 1;
    if (basis.kind != BasisKind::Polynomial)
        for (std::size_t a = 0; a < active_; ++a) cells_ *= static_cast<std::size_t>(basis.bins);
    size_ = cells_ * local_;
    if (paths_ < size_)
        throw std::invalid_argument("regression needs at least as many paths (" + std::to_string(paths_) +
                                    ") as basis functions (" + std::to_string(size_) + ")");

    std::vector<double> scaled(paths_ * active_);
    for (std::size_t k = 0; k < paths_; ++k)
        for (std::size_t a = 0; a < active_; ++a) {
            const std::size_t c = active[a];
            scaled[k * active_ + a] = 2.0 * (state[k * dim + c] - lo[c]) / (hi[c] - lo[c]) - 1.0;
        }

    phi_.resize(paths_ * local_);
    offset_.resize(paths_);
    for_each_block(paths_, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) offset_[k] = evaluate(scaled.data() + k * active_, &phi_[k * local_]);
    });

    const std::size_t m = size_;
    std::vector<Eigen::MatrixXd> parts(num_blocks(paths_));
    for_each_block(paths_, [&](std::size_t b, std::size_t begin, std::size_t end) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (std::size_t k = begin; k < end; ++k) {
            const double* phi = &phi_[k * local_];
            const std::size_t off = offset_[k];
            for (std::size_t r = 0; r < local_; ++r)
                for (std::size_t s = 0; s < local_; ++s)
                    g(static_cast<Eigen::Index>(off + r), static_cast<Eigen::Index>(off + s)) += phi[r] * phi[s];
        }
        parts[b] = std::move(g);
    });
    Eigen::MatrixXd gram =
        pairwise_reduce(std::move(parts), [](Eigen::MatrixXd a, const Eigen::MatrixXd& b) { return (a += b); });
    gram /= static_cast<double>(paths_);
    gram.diagonal().array() += ridge;

    solver_.compute(gram);
    const Eigen::VectorXd d = solver_.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (solver_.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * dmax))
        throw SingularRegressionError("regression Gram matrix is rank deficient (" + describe(basis) + ", " +
                                      std::to_string(paths_) + " paths, ridge " + std::to_string(ridge) + ")");
}

std::size_t Regression::evaluate(const double* x, double* out) const {
    const int degree = basis_.kind == BasisKind::PiecewiseConstant ? 0 : basis_.degree;
    double local[16];
    double table[16][16];
    std::size_t cell = 0;
    for (std::size_t a = 0; a < active_; ++a) {
        double u = x[a];
        if (basis_.kind != BasisKind::Polynomial) {
            const double pos = (u + 1.0) * 0.5 * basis_.bins;
            const int j = std::clamp(static_cast<int>(std::floor(pos)), 0, basis_.bins - 1);
            cell = cell * static_cast<std::size_t>(basis_.bins) + static_cast<std::size_t>(j);
            u = 2.0 * (pos - j) - 1.0;
        }
        local[a] = u;
    }
    for (std::size_t a = 0; a < active_; ++a) legendre(local[a], degree, table[a]);
    for (std::size_t j = 0; j < local_; ++j) {
        double v = 1.0;
        for (std::size_t a = 0; a < active_; ++a) v *= table[a][exponents_[j][a]];
        out[j] = v;
    }
    return cell * local_;
}

Eigen::VectorXd Regression::coefficients(std::span<const double> values) const {
    if (values.size() != paths_) throw std::invalid_argument("value count does not match the regression sample");
    const auto m = static_cast<Eigen::Index>(size_);
    std::vector<Eigen::VectorXd> parts(num_blocks(paths_));
    for_each_block(paths_, [&](std::size_t b, std::size_t begin, std::size_t end) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
        for (std::size_t k = begin; k < end; ++k) {
            const double* phi = &phi_[k * local_];
            const std::size_t off = offset_[k];
            for (std::size_t r = 0; r < local_; ++r) v(static_cast<Eigen::Index>(off + r)) += phi[r] * values[k];
        }
        parts[b] = std::move(v);
    });
    Eigen::VectorXd rhs =
        pairwise_reduce(std::move(parts), [](Eigen::VectorXd a, const Eigen::VectorXd& b) { return (a += b); });
    rhs /= static_cast<double>(paths_);
    return solver_.solve(rhs);
}

void Regression::fit(std::span<const double> values, std::span<double> fitted) const {
    if (fitted.size() != paths_) throw std::invalid_argument("output size does not match the regression sample");
    const Eigen::VectorXd beta = coefficients(values);
    for_each_block(paths_, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const double* phi = &phi_[k * local_];
            const std::size_t off = offset_[k];
            double s = 0.0;
            for (std::size_t r = 0; r < local_; ++r) s += phi[r] * beta(static_cast<Eigen::Index>(off + r));
            fitted[k] = s;
        }
    });
}

std::vector<double> Regression::fit(std::span<const double> values) const {
    std::vector<double> out(paths_);
    fit(values, out);
    return out;
}

std::vector<double> regress_conditional(std::span<const double> values, std::span<const double> state,
                                        std::size_t dim, const RegressionBasis& basis, double ridge) {
    return Regression(state, dim, basis, ridge).fit(values);
}

}  // namespace rbdsde
