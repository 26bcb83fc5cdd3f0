#include "funsde/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <system_error>

#include "funsde/errors.hpp"
#include "funsde/ode.hpp"

namespace funsde {

namespace {

constexpr double kQuadTolerance = 1e-10;

const Expr& zero_expr() {
    static const Expr zero = Expr::constant(0.0);
    return zero;
}

bool is_unary(Op op) {
    switch (op) {
        case Op::neg:
        case Op::exp:
        case Op::ln:
        case Op::sqrt:
        case Op::sin:
        case Op::cos:
        case Op::abs:
            return true;
        default:
            return false;
    }
}

bool is_binary(Op op) {
    switch (op) {
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow:
            return true;
        default:
            return false;
    }
}

bool contains_quad(const Expr& e) {
    if (e.op() == Op::quad) return true;
    for (const auto& a : e.args()) {
        if (contains_quad(a)) return true;
    }
    return false;
}

constexpr std::array<std::pair<std::string_view, Op>, 7> kFunctions{{
    {"exp", Op::exp},
    {"ln", Op::ln},
    {"sqrt", Op::sqrt},
    {"sin", Op::sin},
    {"cos", Op::cos},
    {"abs", Op::abs},
    {"neg", Op::neg},
}};

std::optional<Op> function_op(std::string_view name) {
    for (const auto& [n, op] : kFunctions) {
        if (n == name) return op;
    }
    return std::nullopt;
}

std::string_view function_name(Op op) {
    for (const auto& [n, o] : kFunctions) {
        if (o == op) return n;
    }
    return "?";
}

// Folding helpers. Results that are not finite are left unfolded.
std::optional<double> finite(double v) {
    if (std::isfinite(v)) return v;
    return std::nullopt;
}

std::optional<double> fold_unary(Op op, double a) {
    switch (op) {
        case Op::neg: return -a;
        case Op::exp: return finite(std::exp(a));
        case Op::ln: return a > 0.0 ? finite(std::log(a)) : std::nullopt;
        case Op::sqrt: return a >= 0.0 ? finite(std::sqrt(a)) : std::nullopt;
        case Op::sin: return finite(std::sin(a));
        case Op::cos: return finite(std::cos(a));
        case Op::abs: return std::fabs(a);
        default: return std::nullopt;
    }
}

std::optional<double> fold_binary(Op op, double a, double b) {
    switch (op) {
        case Op::add: return finite(a + b);
        case Op::sub: return finite(a - b);
        case Op::mul: return finite(a * b);
        case Op::div: return b != 0.0 ? finite(a / b) : std::nullopt;
        case Op::pow: return finite(std::pow(a, b));
        default: return std::nullopt;
    }
}

// Smart constructors applying the local simplification rules to already simplified
// children.
Expr make_unary(Op op, const Expr& a) {
    if (a.is_constant()) {
        if (auto v = fold_unary(op, a.value())) return Expr::constant(*v);
    }
    if (op == Op::neg && a.op() == Op::neg) return a.arg(0);
    return Expr::unary(op, a);
}

Expr make_binary(Op op, const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) {
        if (auto v = fold_binary(op, a.value(), b.value())) return Expr::constant(*v);
    }
    switch (op) {
        case Op::add:
            if (a.is_constant(0.0)) return b;
            if (b.is_constant(0.0)) return a;
            break;
        case Op::sub:
            if (b.is_constant(0.0)) return a;
            if (a.is_constant(0.0)) return make_unary(Op::neg, b);
            break;
        case Op::mul:
            if (a.is_constant(0.0) || b.is_constant(0.0)) return zero_expr();
            if (a.is_constant(1.0)) return b;
            if (b.is_constant(1.0)) return a;
            break;
        case Op::div:
            if (b.is_constant(1.0)) return a;
            if (a.is_constant(0.0) && !b.is_constant(0.0)) return zero_expr();
            break;
        case Op::pow:
            if (b.is_constant(1.0)) return a;
            if (b.is_constant(0.0)) return Expr::constant(1.0);
            if (a.is_constant(1.0)) return Expr::constant(1.0);
            break;
        default:
            break;
    }
    return Expr::binary(op, a, b);
}

Expr make_quad(const Expr& body, const Expr& lower, const Expr& upper) {
    if (body.is_constant(0.0) || lower == upper) return zero_expr();
    return Expr::quad(body, lower, upper);
}

Expr rebuild(const Expr& e, const std::vector<Expr>& args) {
    if (is_unary(e.op())) return make_unary(e.op(), args[0]);
    if (is_binary(e.op())) return make_binary(e.op(), args[0], args[1]);
    if (e.op() == Op::quad) return make_quad(args[0], args[1], args[2]);
    return e;
}

// ---------------------------------------------------------------------------
// Lexer / parser

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, comma, end };

struct Token {
    Tok kind;
    std::size_t offset;
    std::string_view text;
    double number = 0.0;
};

std::string_view describe(Tok k) {
    switch (k) {
        case Tok::number: return "number";
        case Tok::ident: return "identifier";
        case Tok::plus: return "'+'";
        case Tok::minus: return "'-'";
        case Tok::star: return "'*'";
        case Tok::slash: return "'/'";
        case Tok::caret: return "'^'";
        case Tok::lparen: return "'('";
        case Tok::rparen: return "')'";
        case Tok::comma: return "','";
        case Tok::end: return "end of input";
    }
    return "?";
}

bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < src.size()) {
        const char c = src[i];
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (is_digit(c) || (c == '.' && i + 1 < src.size() && is_digit(src[i + 1]))) {
            while (i < src.size() && is_digit(src[i])) ++i;
            if (i < src.size() && src[i] == '.') {
                ++i;
                while (i < src.size() && is_digit(src[i])) ++i;
            }
            if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
                if (j < src.size() && is_digit(src[j])) {
                    i = j;
                    while (i < src.size() && is_digit(src[i])) ++i;
                }
            }
            Token tok{Tok::number, start, src.substr(start, i - start)};
            const auto [ptr, ec] = std::from_chars(src.data() + start, src.data() + i, tok.number);
            if (ec != std::errc{} || !std::isfinite(tok.number)) {
                throw ParseError("numeric literal out of range", start, {"number"});
            }
            out.push_back(tok);
            continue;
        }
        if (is_ident_start(c)) {
            while (i < src.size() && (is_ident_start(src[i]) || is_digit(src[i]))) ++i;
            out.push_back({Tok::ident, start, src.substr(start, i - start)});
            continue;
        }
        Tok kind;
        switch (c) {
            case '+': kind = Tok::plus; break;
            case '-': kind = Tok::minus; break;
            case '*': kind = Tok::star; break;
            case '/': kind = Tok::slash; break;
            case '^': kind = Tok::caret; break;
            case '(': kind = Tok::lparen; break;
            case ')': kind = Tok::rparen; break;
            case ',': kind = Tok::comma; break;
            default:
                throw ParseError(std::string("unexpected character '") + c + "'", start,
                                 {"number", "identifier", "'('", "'-'"});
        }
        out.push_back({kind, start, src.substr(start, 1)});
        ++i;
    }
    out.push_back({Tok::end, src.size(), {}});
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view src) : tokens_(tokenize(src)) {}

    Expr parse_all() {
        Expr e = expression();
        expect(Tok::end, {"operator", "end of input"});
        return e;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
    }
    const Token& next() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& what, std::vector<std::string> expected) const {
        const Token& tok = peek();
        std::string msg = what + " at offset " + std::to_string(tok.offset) + " (found " +
                          std::string(describe(tok.kind));
        if (tok.kind == Tok::ident || tok.kind == Tok::number) msg += " '" + std::string(tok.text) + "'";
        msg += "; expected ";
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) msg += ", ";
            msg += expected[i];
        }
        msg += ")";
        throw ParseError(msg, tok.offset, std::move(expected));
    }

    void expect(Tok kind, std::vector<std::string> expected) {
        if (peek().kind != kind) fail("syntax error", std::move(expected));
        next();
    }

    Expr expression() {
        Expr lhs = term();
        while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
            const Op op = next().kind == Tok::plus ? Op::add : Op::sub;
            lhs = Expr::binary(op, lhs, term());
        }
        return lhs;
    }

    Expr term() {
        Expr lhs = unary();
        while (peek().kind == Tok::star || peek().kind == Tok::slash) {
            const Op op = next().kind == Tok::star ? Op::mul : Op::div;
            lhs = Expr::binary(op, lhs, unary());
        }
        return lhs;
    }

    Expr unary() {
        if (peek().kind == Tok::minus) {
            next();
            // "-2" is a negative literal unless it is the base of a power: -2^2 = -(2^2).
            if (peek().kind == Tok::number && peek(1).kind != Tok::caret) {
                return Expr::constant(-next().number);
            }
            return Expr::unary(Op::neg, unary());
        }
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (peek().kind == Tok::caret) {
            next();
            return Expr::binary(Op::pow, base, unary());
        }
        return base;
    }

    Expr primary() {
        const Token& tok = peek();
        switch (tok.kind) {
            case Tok::number:
                next();
                return Expr::constant(tok.number);
            case Tok::lparen: {
                next();
                Expr inner = expression();
                expect(Tok::rparen, {"')'", "operator"});
                return inner;
            }
            case Tok::ident:
                return identifier();
            default:
                fail("syntax error", {"number", "identifier", "'('", "'-'"});
        }
    }

    Expr identifier() {
        const Token tok = next();
        const std::string_view name = tok.text;
        if (name == "quad") return quad_call(tok);
        if (auto op = function_op(name)) {
            expect(Tok::lparen, {"'('"});
            Expr arg = expression();
            expect(Tok::rparen, {"')'", "operator"});
            return Expr::unary(*op, arg);
        }
        if (name == "t") return Expr::variable(Var::t);
        if (name == "x") return Expr::variable(Var::x);
        if (name == "xi") {
            if (quad_depth_ == 0 || in_bound_) {
                throw ParseError("bound variable 'xi' used outside a quad body", tok.offset,
                                 {"t", "x", "parameter"});
            }
            return Expr::variable(Var::xi);
        }
        return Expr::param(std::string(name));
    }

    Expr quad_call(const Token& tok) {
        if (quad_depth_ > 0) {
            throw ParseError("nested quad: the bound variable xi would be shadowed", tok.offset,
                             {"expression without quad"});
        }
        expect(Tok::lparen, {"'('"});
        ++quad_depth_;
        const std::size_t body_offset = peek().offset;
        Expr body = expression();
        --quad_depth_;
        if (depends_on(body, Var::x)) {
            throw ParseError("malformed quad: body must be written in the bound variable xi, not x",
                             body_offset, {"expression in t and xi"});
        }
        if (peek().kind != Tok::comma) fail("malformed quad: expected lower bound", {"','"});
        next();
        in_bound_ = true;
        Expr lower = expression();
        if (peek().kind != Tok::comma) fail("malformed quad: expected upper bound", {"','"});
        next();
        Expr upper = expression();
        in_bound_ = false;
        expect(Tok::rparen, {"')'"});
        return Expr::quad(body, lower, upper);
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    int quad_depth_ = 0;
    bool in_bound_ = false;
};

// ---------------------------------------------------------------------------
// Formatting

std::string format_number(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

// Precedence levels: 1 additive, 2 multiplicative, 3 unary minus, 4 power, 5 atom.
int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::add:
        case Op::sub: return 1;
        case Op::mul:
        case Op::div: return 2;
        case Op::neg: return 3;
        case Op::pow: return 4;
        case Op::constant: return std::signbit(e.value()) ? 3 : 5;
        default: return 5;
    }
}

void format_into(const Expr& e, int required, std::string& out);

void format_operand(const Expr& e, int required, std::string& out) {
    // Negative constants are always parenthesized away from the top level.
    const bool negative_constant = e.op() == Op::constant && std::signbit(e.value());
    const bool parens = precedence(e) < required || (negative_constant && required > 0);
    if (parens) out += '(';
    format_into(e, 0, out);
    if (parens) out += ')';
}

void format_into(const Expr& e, int /*required*/, std::string& out) {
    switch (e.op()) {
        case Op::constant:
            out += format_number(e.value());
            return;
        case Op::param:
            out += e.name();
            return;
        case Op::var:
            out += e.var() == Var::t ? "t" : e.var() == Var::x ? "x" : "xi";
            return;
        case Op::add:
        case Op::sub:
            format_operand(e.arg(0), 1, out);
            out += e.op() == Op::add ? " + " : " - ";
            format_operand(e.arg(1), 2, out);
            return;
        case Op::mul:
        case Op::div:
            format_operand(e.arg(0), 2, out);
            out += e.op() == Op::mul ? "*" : "/";
            format_operand(e.arg(1), 3, out);
            return;
        case Op::pow:
            format_operand(e.arg(0), 5, out);
            out += '^';
            format_operand(e.arg(1), 4, out);
            return;
        case Op::neg: {
            out += '-';
            const Expr& a = e.arg(0);
            // A bare literal after '-' would be read back as a negative constant.
            if (a.op() == Op::constant) {
                out += '(';
                format_into(a, 0, out);
                out += ')';
            } else {
                format_operand(a, 3, out);
            }
            return;
        }
        case Op::quad:
            out += "quad(";
            format_into(e.arg(0), 0, out);
            out += ", ";
            format_into(e.arg(1), 0, out);
            out += ", ";
            format_into(e.arg(2), 0, out);
            out += ')';
            return;
        default:
            out += function_name(e.op());
            out += '(';
            format_into(e.arg(0), 0, out);
            out += ')';
            return;
    }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalContext {
    double t;
    double x;
    double xi;
    const Params* params;
};

double checked(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string("non-finite result in ") + what);
    return v;
}

double eval_node(const Expr& e, const EvalContext& ctx) {
    switch (e.op()) {
        case Op::constant:
            return e.value();
        case Op::param: {
            const auto it = ctx.params->find(e.name());
            if (it == ctx.params->end()) throw UnboundParameterError(e.name());
            return it->second;
        }
        case Op::var:
            return e.var() == Var::t ? ctx.t : e.var() == Var::x ? ctx.x : ctx.xi;
        case Op::add:
            return checked(eval_node(e.arg(0), ctx) + eval_node(e.arg(1), ctx), "addition");
        case Op::sub:
            return checked(eval_node(e.arg(0), ctx) - eval_node(e.arg(1), ctx), "subtraction");
        case Op::mul:
            return checked(eval_node(e.arg(0), ctx) * eval_node(e.arg(1), ctx), "multiplication");
        case Op::div: {
            const double num = eval_node(e.arg(0), ctx);
            const double den = eval_node(e.arg(1), ctx);
            if (den == 0.0) throw DomainError("division by zero");
            return checked(num / den, "division");
        }
        case Op::pow:
            return checked(std::pow(eval_node(e.arg(0), ctx), eval_node(e.arg(1), ctx)), "power");
        case Op::neg:
            return -eval_node(e.arg(0), ctx);
        case Op::exp:
            return checked(std::exp(eval_node(e.arg(0), ctx)), "exp");
        case Op::ln: {
            const double a = eval_node(e.arg(0), ctx);
            if (!(a > 0.0)) throw DomainError("ln of non-positive value");
            return std::log(a);
        }
        case Op::sqrt: {
            const double a = eval_node(e.arg(0), ctx);
            if (a < 0.0) throw DomainError("sqrt of negative value");
            return std::sqrt(a);
        }
        case Op::sin:
            return std::sin(eval_node(e.arg(0), ctx));
        case Op::cos:
            return std::cos(eval_node(e.arg(0), ctx));
        case Op::abs:
            return std::fabs(eval_node(e.arg(0), ctx));
        case Op::quad: {
            const double lower = eval_node(e.arg(1), ctx);
            const double upper = eval_node(e.arg(2), ctx);
            const Expr& body = e.arg(0);
            EvalContext inner = ctx;
            return checked(ode::quad(
                               [&](double s) {
                                   inner.xi = s;
                                   return eval_node(body, inner);
                               },
                               lower, upper, kQuadTolerance),
                           "quad");
        }
    }
    throw std::logic_error("unknown expression node");
}

}  // namespace

ParseError::ParseError(const std::string& message, std::size_t offset, std::vector<std::string> expected)
    : Error(message), offset_(offset), expected_(std::move(expected)) {}

// ---------------------------------------------------------------------------
// Expr

Expr::Expr() : node_(zero_expr().node_) {}

Expr Expr::constant(double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("expression constants must be finite");
    auto n = std::make_shared<ExprNode>();
    n->op = Op::constant;
    n->value = value;
    return Expr(std::move(n));
}

Expr Expr::param(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::param;
    n->name = std::move(name);
    return Expr(std::move(n));
}

Expr Expr::variable(Var v) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::var;
    n->var = v;
    return Expr(std::move(n));
}

Expr Expr::unary(Op op, Expr arg) {
    if (!is_unary(op)) throw std::invalid_argument("not a unary operator");
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->args.push_back(std::move(arg));
    return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
    if (!is_binary(op)) throw std::invalid_argument("not a binary operator");
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->args.push_back(std::move(lhs));
    n->args.push_back(std::move(rhs));
    return Expr(std::move(n));
}

Expr Expr::quad(Expr body, Expr lower, Expr upper) {
    if (depends_on(body, Var::x)) throw std::invalid_argument("quad body must not reference x");
    if (contains_quad(body)) throw std::invalid_argument("nested quad nodes are not supported");
    if (depends_on(lower, Var::xi) || depends_on(upper, Var::xi)) {
        throw std::invalid_argument("quad bounds must not reference xi");
    }
    auto n = std::make_shared<ExprNode>();
    n->op = Op::quad;
    n->args = {std::move(body), std::move(lower), std::move(upper)};
    return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return node_->name; }
Var Expr::var() const { return node_->var; }
const std::vector<Expr>& Expr::args() const { return node_->args; }

bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.op() != b.op()) return false;
    switch (a.op()) {
        case Op::constant: return a.value() == b.value();
        case Op::param: return a.name() == b.name();
        case Op::var: return a.var() == b.var();
        default: break;
    }
    const auto& aa = a.args();
    const auto& ba = b.args();
    if (aa.size() != ba.size()) return false;
    for (std::size_t i = 0; i < aa.size(); ++i) {
        if (!(aa[i] == ba[i])) return false;
    }
    return true;
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Op::add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Op::sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Op::mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(Op::div, a, b); }
Expr operator-(const Expr& a) { return Expr::unary(Op::neg, a); }
Expr pow(const Expr& base, const Expr& exponent) { return Expr::binary(Op::pow, base, exponent); }

// ---------------------------------------------------------------------------
// Free functions

Expr parse(std::string_view source) { return Parser(source).parse_all(); }

std::string format(const Expr& e) {
    std::string out;
    format_into(e, 0, out);
    return out;
}

double eval(const Expr& e, double t, double x, const Params& params) {
    const EvalContext ctx{t, x, 0.0, &params};
    return eval_node(e, ctx);
}

Expr simplify(const Expr& e) {
    if (e.args().empty()) return e;
    std::vector<Expr> args;
    args.reserve(e.args().size());
    for (const auto& a : e.args()) args.push_back(simplify(a));
    return rebuild(e, args);
}

Expr substitute(const Expr& e, Var v, const Expr& replacement) {
    if (e.op() == Op::var) return e.var() == v ? replacement : e;
    if (e.args().empty()) return e;
    std::vector<Expr> args;
    args.reserve(e.args().size());
    for (std::size_t i = 0; i < e.args().size(); ++i) {
        // xi is bound inside a quad body; it has no free occurrences there.
        if (e.op() == Op::quad && i == 0 && v == Var::xi) {
            args.push_back(e.arg(0));
        } else {
            args.push_back(substitute(e.arg(i), v, replacement));
        }
    }
    if (is_unary(e.op())) return Expr::unary(e.op(), args[0]);
    if (is_binary(e.op())) return Expr::binary(e.op(), args[0], args[1]);
    return Expr::quad(args[0], args[1], args[2]);
}

Expr bind(const Expr& e, const Params& params) {
    if (e.op() == Op::param) {
        const auto it = params.find(e.name());
        return it == params.end() ? e : Expr::constant(it->second);
    }
    if (e.args().empty()) return e;
    std::vector<Expr> args;
    args.reserve(e.args().size());
    for (const auto& a : e.args()) args.push_back(bind(a, params));
    return rebuild(e, args);
}

Expr differentiate(const Expr& e, Var v) {
    const auto d = [v](const Expr& a) { return differentiate(a, v); };
    const Expr one = Expr::constant(1.0);
    switch (e.op()) {
        case Op::constant:
        case Op::param:
            return zero_expr();
        case Op::var:
            return e.var() == v ? one : zero_expr();
        case Op::add:
        case Op::sub:
            return make_binary(e.op(), d(e.arg(0)), d(e.arg(1)));
        case Op::mul: {
            const Expr& a = e.arg(0);
            const Expr& b = e.arg(1);
            return make_binary(Op::add, make_binary(Op::mul, d(a), b), make_binary(Op::mul, a, d(b)));
        }
        case Op::div: {
            const Expr& a = e.arg(0);
            const Expr& b = e.arg(1);
            const Expr da_over_b = make_binary(Op::div, d(a), b);
            const Expr db = d(b);
            if (db.is_constant(0.0)) return da_over_b;
            return make_binary(Op::sub, da_over_b,
                               make_binary(Op::div, make_binary(Op::mul, a, db),
                                           make_binary(Op::pow, b, Expr::constant(2.0))));
        }
        case Op::pow: {
            const Expr& a = e.arg(0);
            const Expr& b = e.arg(1);
            const bool base_varies = depends_on(a, v);
            const bool exp_varies = depends_on(b, v);
            if (!base_varies && !exp_varies) return zero_expr();
            if (!exp_varies) {
                const Expr reduced = make_binary(Op::pow, a, make_binary(Op::sub, b, one));
                return make_binary(Op::mul, make_binary(Op::mul, b, reduced), d(a));
            }
            const Expr ln_a = make_unary(Op::ln, a);
            if (!base_varies) {
                return make_binary(Op::mul, make_binary(Op::mul, e, ln_a), d(b));
            }
            const Expr inner = make_binary(Op::add, make_binary(Op::mul, d(b), ln_a),
                                           make_binary(Op::div, make_binary(Op::mul, b, d(a)), a));
            return make_binary(Op::mul, e, inner);
        }
        case Op::neg:
            return make_unary(Op::neg, d(e.arg(0)));
        case Op::exp:
            return make_binary(Op::mul, e, d(e.arg(0)));
        case Op::ln:
            return make_binary(Op::div, d(e.arg(0)), e.arg(0));
        case Op::sqrt:
            return make_binary(Op::div, d(e.arg(0)), make_binary(Op::mul, Expr::constant(2.0), e));
        case Op::sin:
            return make_binary(Op::mul, make_unary(Op::cos, e.arg(0)), d(e.arg(0)));
        case Op::cos:
            return make_unary(Op::neg, make_binary(Op::mul, make_unary(Op::sin, e.arg(0)), d(e.arg(0))));
        case Op::abs:
            return make_binary(Op::mul, make_binary(Op::div, e.arg(0), e), d(e.arg(0)));
        case Op::quad: {
            if (v == Var::xi) return zero_expr();
            const Expr& body = e.arg(0);
            const Expr& lower = e.arg(1);
            const Expr& upper = e.arg(2);
            // Leibniz rule: boundary terms plus differentiation under the integral sign.
            Expr result = make_binary(
                Op::sub, make_binary(Op::mul, simplify(substitute(body, Var::xi, upper)), d(upper)),
                make_binary(Op::mul, simplify(substitute(body, Var::xi, lower)), d(lower)));
            if (v == Var::t) {
                result = make_binary(Op::add, result, make_quad(differentiate(body, Var::t), lower, upper));
            }
            return result;
        }
    }
    throw std::logic_error("unknown expression node");
}

bool depends_on(const Expr& e, Var v) {
    if (e.op() == Op::var) return e.var() == v;
    for (std::size_t i = 0; i < e.args().size(); ++i) {
        if (e.op() == Op::quad && i == 0 && v == Var::xi) continue;
        if (depends_on(e.arg(i), v)) return true;
    }
    return false;
}

std::set<std::string> parameters(const Expr& e) {
    std::set<std::string> out;
    if (e.op() == Op::param) out.insert(e.name());
    for (const auto& a : e.args()) {
        auto sub = parameters(a);
        out.insert(sub.begin(), sub.end());
    }
    return out;
}

}  // namespace funsde
