#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace funsde {

/// Free variables of an expression. `xi` only appears inside the body of a quad node.
enum class Var { t, x, xi };

enum class Op {
    constant,
    param,
    var,
    add,
    sub,
    mul,
    div,
    pow,
    neg,
    exp,
    ln,
    sqrt,
    sin,
    cos,
    abs,
    quad,  // args: body (in t, xi), lower, upper
};

using Params = std::map<std::string, double, std::less<>>;

struct ExprNode;

/// Immutable expression tree over t and x. Copies share structure, so values are
/// cheap to pass around and safe to read from several threads.
class Expr {
public:
    Expr();  // the constant 0

    static Expr constant(double value);
    static Expr param(std::string name);
    static Expr variable(Var v);
    static Expr unary(Op op, Expr arg);
    static Expr binary(Op op, Expr lhs, Expr rhs);
    /// Definite integral of body over xi from lower to upper. The body may use t and xi
    /// but not x; the bounds may use t and x but not xi.
    static Expr quad(Expr body, Expr lower, Expr upper);

    Op op() const;
    double value() const;
    const std::string& name() const;
    Var var() const;
    const std::vector<Expr>& args() const;
    const Expr& arg(std::size_t i) const { return args()[i]; }

    bool is_constant() const { return op() == Op::constant; }
    bool is_constant(double v) const { return op() == Op::constant && value() == v; }

    /// Structural equality.
    friend bool operator==(const Expr& a, const Expr& b);

private:
    explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}
    std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
    Op op = Op::constant;
    double value = 0.0;
    std::string name;
    Var var = Var::t;
    std::vector<Expr> args;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);

/// Parses the infix grammar documented in README.md. Unknown identifiers become
/// named parameters. Throws ParseError with the byte offset and the expected tokens.
Expr parse(std::string_view source);

/// Shortest text that parses back to a structurally identical tree.
std::string format(const Expr& e);

/// Evaluates at (t, x). quad nodes use adaptive Simpson at tolerance 1e-10.
/// Throws UnboundParameterError, DomainError or QuadratureError.
double eval(const Expr& e, double t, double x, const Params& params = {});

/// Symbolic partial derivative with respect to t or x (xi is accepted for quad bodies).
Expr differentiate(const Expr& e, Var v);

/// Constant folding and the 0/1 identities; nothing more.
Expr simplify(const Expr& e);

/// Replaces every free occurrence of variable v by `replacement`.
Expr substitute(const Expr& e, Var v, const Expr& replacement);

/// Replaces bound parameters by constants and simplifies. Unbound ones are kept.
Expr bind(const Expr& e, const Params& params);

bool depends_on(const Expr& e, Var v);
std::set<std::string> parameters(const Expr& e);

}  // namespace funsde
