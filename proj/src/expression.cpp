#include "rbdsde/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "rbdsde/errors.hpp"

namespace rbdsde {

enum class Op {
    Constant, T, Y, X, Z,
    Neg, Add, Sub, Mul, Div, Pow,
    Exp, Log, Abs, Sqrt, Sin, Cos, Max, Min,
};

struct Expression::Node {
    Op op = Op::Constant;
    double value = 0.0;  // Constant
    int index = 0;       // X, Z (0-based)
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

NodePtr constant(double v) {
    auto n = std::make_shared<Expression::Node>();
    n->op = Op::Constant;
    n->value = v;
    return n;
}

class Parser {
public:
    Parser(const std::string& text, const std::map<std::string, double>& params)
        : s_(text), params_(params) {}

    NodePtr parse() {
        NodePtr e = expression();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

    int max_x = 0, max_z = 0;
    bool uses_y = false, uses_t = false;

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("expression '" + s_ + "' at position " + std::to_string(pos_) + ": " + msg);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expression() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) lhs = make(Op::Add, lhs, term());
            else if (accept('-')) lhs = make(Op::Sub, lhs, term());
            else return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (accept('*')) lhs = make(Op::Mul, lhs, unary());
            else if (accept('/')) lhs = make(Op::Div, lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Op::Neg, unary());
        if (accept('+')) return unary();
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (accept('^')) return make(Op::Pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = expression();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(std::string("unexpected '") + c + "'");
    }

    NodePtr number() {
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        return constant(v);
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        const std::string name = s_.substr(start, pos_ - start);

        skip();
        if (pos_ < s_.size() && s_[pos_] == '(') return call(name);

        if (name == "t") {
            uses_t = true;
            return make(Op::T);
        }
        if (name == "y") {
            uses_y = true;
            return make(Op::Y);
        }
        if (name == "pi") return constant(std::numbers::pi);
        if (name == "e") return constant(std::numbers::e);
        if (auto it = params_.find(name); it != params_.end()) return constant(it->second);
        if ((name[0] == 'x' || name[0] == 'z') && component(name) > 0) {
            auto n = std::make_shared<Expression::Node>();
            const int k = component(name);
            n->op = name[0] == 'x' ? Op::X : Op::Z;
            n->index = k - 1;
            (name[0] == 'x' ? max_x : max_z) = std::max(name[0] == 'x' ? max_x : max_z, k);
            return n;
        }
        pos_ = start;
        fail("unknown identifier '" + name + "'");
    }

    // "x" -> 1, "x3" -> 3, anything else -> 0.
    static int component(const std::string& name) {
        if (name.size() == 1) return 1;
        for (std::size_t i = 1; i < name.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(name[i]))) return 0;
        return std::stoi(name.substr(1));
    }

    NodePtr call(const std::string& name) {
        static const std::map<std::string, std::pair<Op, int>> functions{
            {"exp", {Op::Exp, 1}}, {"log", {Op::Log, 1}}, {"abs", {Op::Abs, 1}},
            {"sqrt", {Op::Sqrt, 1}}, {"sin", {Op::Sin, 1}}, {"cos", {Op::Cos, 1}},
            {"max", {Op::Max, 2}}, {"min", {Op::Min, 2}}, {"pow", {Op::Pow, 2}},
        };
        const auto it = functions.find(name);
        if (it == functions.end()) fail("unknown function '" + name + "'");
        expect('(');
        NodePtr a = expression();
        NodePtr b;
        if (it->second.second == 2) {
            expect(',');
            b = expression();
        }
        expect(')');
        return make(it->second.first, a, b);
    }

    const std::string& s_;
    const std::map<std::string, double>& params_;
    std::size_t pos_ = 0;
};

double eval(const Expression::Node& n, const ExpressionArgs& args) {
    switch (n.op) {
        case Op::Constant: return n.value;
        case Op::T: return args.t;
        case Op::Y: return args.y;
        case Op::X:
            if (static_cast<std::size_t>(n.index) >= args.x.size())
                throw std::out_of_range("expression refers to x" + std::to_string(n.index + 1));
            return args.x[n.index];
        case Op::Z:
            if (static_cast<std::size_t>(n.index) >= args.z.size())
                throw std::out_of_range("expression refers to z" + std::to_string(n.index + 1));
            return args.z[n.index];
        case Op::Neg: return -eval(*n.a, args);
        case Op::Add: return eval(*n.a, args) + eval(*n.b, args);
        case Op::Sub: return eval(*n.a, args) - eval(*n.b, args);
        case Op::Mul: return eval(*n.a, args) * eval(*n.b, args);
        case Op::Div: return eval(*n.a, args) / eval(*n.b, args);
        case Op::Pow: return std::pow(eval(*n.a, args), eval(*n.b, args));
        case Op::Exp: return std::exp(eval(*n.a, args));
        case Op::Log: return std::log(eval(*n.a, args));
        case Op::Abs: return std::abs(eval(*n.a, args));
        case Op::Sqrt: return std::sqrt(eval(*n.a, args));
        case Op::Sin: return std::sin(eval(*n.a, args));
        case Op::Cos: return std::cos(eval(*n.a, args));
        case Op::Max: return std::max(eval(*n.a, args), eval(*n.b, args));
        case Op::Min: return std::min(eval(*n.a, args), eval(*n.b, args));
    }
    return 0.0;
}

}  // namespace

Expression Expression::parse(const std::string& text, const std::map<std::string, double>& parameters) {
    Parser p(text, parameters);
    Expression e;
    e.root_ = p.parse();
    e.text_ = text;
    e.max_x_ = p.max_x;
    e.max_z_ = p.max_z;
    e.uses_y_ = p.uses_y;
    e.uses_t_ = p.uses_t;
    return e;
}

double Expression::operator()(const ExpressionArgs& args) const { return eval(*root_, args); }

}  // namespace rbdsde
