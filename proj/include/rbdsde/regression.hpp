#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rbdsde {

enum class BasisKind { Polynomial, PiecewiseConstant, LocalPolynomial };

/// Approximation space for conditional expectations. The domain is the
/// bounding box of the regression sample; coordinates along which the sample
/// is degenerate (a single point) are dropped.
struct RegressionBasis {
    BasisKind kind = BasisKind::Polynomial;
    int degree = 2;  // total degree, Polynomial and LocalPolynomial
    int bins = 8;    // per active coordinate, PiecewiseConstant and LocalPolynomial

    static RegressionBasis polynomial(int degree) { return {BasisKind::Polynomial, degree, 1}; }
    static RegressionBasis piecewise_constant(int bins) { return {BasisKind::PiecewiseConstant, 0, bins}; }
    static RegressionBasis local_polynomial(int bins, int degree) {
        return {BasisKind::LocalPolynomial, degree, bins};
    }

    bool operator==(const RegressionBasis&) const = default;
};

/// "polynomial", "piecewise-constant", "local-polynomial".
std::string to_string(BasisKind kind);
/// Throws std::invalid_argument for an unknown name.
BasisKind basis_kind_from_string(const std::string& name);
std::string describe(const RegressionBasis& basis);

/// Least-squares projector onto the basis for one fixed state sample
/// (paths x dim, row major). The Gram matrix is assembled and factorised
/// once; fit() can then be applied to any number of value vectors.
class Regression {
public:
    /// Throws std::invalid_argument when paths < basis dimension and
    /// SingularRegressionError for a rank-deficient Gram matrix with ridge 0.
    Regression(std::span<const double> state, std::size_t dim, const RegressionBasis& basis, double ridge);

    std::size_t num_paths() const { return paths_; }
    /// Number of basis functions.
    std::size_t size() const { return size_; }

    /// Coefficients of the ridge least-squares fit of `values`.
    Eigen::VectorXd coefficients(std::span<const double> values) const;
    /// Fitted values at every path's state.
    void fit(std::span<const double> values, std::span<double> fitted) const;
    std::vector<double> fit(std::span<const double> values) const;

private:
    // Writes the local basis values at the scaled state x and returns the
    // index of the first one (all other functions vanish there).
    std::size_t evaluate(const double* x, double* out) const;

    std::size_t paths_ = 0;
    std::size_t dim_ = 0;
    RegressionBasis basis_;
    std::vector<std::vector<int>> exponents_;  // Legendre multi-indices of the local polynomial
    std::vector<double> phi_;                  // paths x local_ basis values
    std::vector<std::size_t> offset_;
    std::size_t active_ = 0;
    std::size_t cells_ = 1;
    std::size_t local_ = 1;  // functions per cell
    std::size_t size_ = 1;
    Eigen::LDLT<Eigen::MatrixXd> solver_;
};

/// One-shot projection: fitted values of `values` regressed on `state`.
std::vector<double> regress_conditional(std::span<const double> values, std::span<const double> state,
                                        std::size_t dim, const RegressionBasis& basis, double ridge);

}  // namespace rbdsde
