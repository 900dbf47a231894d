#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>

namespace rbdsde {

/// Arguments an expression may refer to: t, y, x (= x1), x1..xd, z (= z1), z1..zd.
struct ExpressionArgs {
    double t = 0.0;
    std::span<const double> x{};
    double y = 0.0;
    std::span<const double> z{};
};

/// Small arithmetic language for user-supplied generators and coefficients.
///
///   operators   + - * / ^ (right associative), unary minus
///   functions   exp log abs sqrt sin cos max(a,b) min(a,b) pow(a,b)
///   constants   pi, e, plus any named parameters passed to parse()
///
/// Parsing resolves every identifier; evaluation never allocates.
class Expression {
public:
    /// Throws ParseError with the offending position.
    static Expression parse(const std::string& text,
                            const std::map<std::string, double>& parameters = {});

    double operator()(const ExpressionArgs& args) const;
    double operator()(double t, std::span<const double> x, double y,
                      std::span<const double> z) const {
        return (*this)(ExpressionArgs{t, x, y, z});
    }

    const std::string& text() const { return text_; }
    /// Highest x / z component referenced (1-based, 0 when unused).
    int max_x_index() const { return max_x_; }
    int max_z_index() const { return max_z_; }
    bool uses_y() const { return uses_y_; }
    bool uses_t() const { return uses_t_; }

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
    int max_x_ = 0;
    int max_z_ = 0;
    bool uses_y_ = false;
    bool uses_t_ = false;
};

}  // namespace rbdsde
