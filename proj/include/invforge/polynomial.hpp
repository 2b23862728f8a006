#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "invforge/monomial.hpp"
#include "invforge/rational.hpp"

namespace invforge {

struct PolyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline bool coeff_is_zero(const Rational& c) { return c == 0; }
inline bool coeff_is_zero(double c) { return c == 0.0; }
inline double coeff_abs(double c) { return std::fabs(c); }
}  // namespace detail

// Sparse multivariate polynomial over an ordered variable list. The rational
// instantiation is exact; the double instantiation drops terms below a dead
// zone of 1e-12 times the largest absolute coefficient.
template <class C>
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<std::string> vars) : vars_(std::move(vars)) {}
    Polynomial(std::vector<std::string> vars, const C& constant)
        : vars_(std::move(vars)) {
        if (!detail::coeff_is_zero(constant))
            terms_.emplace(Monomial(vars_.size()), constant);
    }

    static Polynomial variable(const std::vector<std::string>& vars, std::size_t i) {
        Polynomial p(vars);
        Monomial m(vars.size());
        m.exponents.at(i) = 1;
        p.terms_.emplace(std::move(m), C(1));
        return p;
    }

    const std::vector<std::string>& variables() const { return vars_; }
    const std::map<Monomial, C, GrlexLess>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    // degree of the zero polynomial is defined as 0 (see is_zero)
    int degree() const {
        int d = 0;
        for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
        return d;
    }

    C coefficient(const Monomial& m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? C(0) : it->second;
    }

    void add_term(const Monomial& m, const C& c) {
        if (m.size() != vars_.size())
            throw PolyError("term arity does not match variable list");
        auto it = terms_.find(m);
        if (it == terms_.end()) {
            if (!detail::coeff_is_zero(c)) terms_.emplace(m, c);
        } else {
            it->second += c;
            if (detail::coeff_is_zero(it->second)) terms_.erase(it);
        }
    }

    Polynomial operator-() const {
        Polynomial r(vars_);
        for (const auto& [m, c] : terms_) r.terms_.emplace(m, -c);
        return r;
    }

    Polynomial operator+(const Polynomial& o) const {
        check_same_vars(o);
        Polynomial r = *this;
        for (const auto& [m, c] : o.terms_) r.add_term(m, c);
        r.drop_dead_terms();
        return r;
    }
    Polynomial operator-(const Polynomial& o) const { return *this + (-o); }

    Polynomial operator*(const Polynomial& o) const {
        check_same_vars(o);
        Polynomial r(vars_);
        for (const auto& [ma, ca] : terms_)
            for (const auto& [mb, cb] : o.terms_) r.add_term(ma * mb, ca * cb);
        r.drop_dead_terms();
        return r;
    }

    Polynomial operator*(const C& s) const {
        Polynomial r(vars_);
        if (detail::coeff_is_zero(s)) return r;
        for (const auto& [m, c] : terms_) {
            C v = c * s;
            if (!detail::coeff_is_zero(v)) r.terms_.emplace(m, v);
        }
        r.drop_dead_terms();
        return r;
    }

    bool operator==(const Polynomial& o) const {
        return vars_ == o.vars_ && terms_ == o.terms_;
    }
    bool operator!=(const Polynomial& o) const { return !(*this == o); }

    Polynomial derivative(std::size_t var) const {
        if (var >= vars_.size()) throw PolyError("derivative: no such variable");
        Polynomial r(vars_);
        for (const auto& [m, c] : terms_) {
            int e = m.exponents[var];
            if (e == 0) continue;
            Monomial mm = m;
            mm.exponents[var] = e - 1;
            r.add_term(mm, c * C(e));
        }
        return r;
    }

    template <class V>
    V evaluate(const std::vector<V>& point) const {
        if (point.size() != vars_.size())
            throw PolyError("evaluate: point dimension mismatch");
        V acc(0);
        for (const auto& [m, c] : terms_) {
            V t(coeff_as<V>(c));
            for (std::size_t i = 0; i < point.size(); ++i)
                for (int k = 0; k < m.exponents[i]; ++k) t *= point[i];
            acc += t;
        }
        return acc;
    }

    // Maps this polynomial onto a new variable list; `where[i]` is the index
    // of old variable i in `new_vars`.
    Polynomial remap(const std::vector<std::string>& new_vars,
                     const std::vector<std::size_t>& where) const {
        Polynomial r(new_vars);
        for (const auto& [m, c] : terms_) {
            Monomial mm(new_vars.size());
            for (std::size_t i = 0; i < m.exponents.size(); ++i)
                mm.exponents.at(where.at(i)) += m.exponents[i];
            r.add_term(mm, c);
        }
        return r;
    }

private:
    template <class V>
    static V coeff_as(const C& c) {
        if constexpr (std::is_same_v<C, Rational> && std::is_same_v<V, double>)
            return to_double(c);
        else
            return V(c);
    }

    void check_same_vars(const Polynomial& o) const {
        if (vars_ != o.vars_)
            throw PolyError("operation on polynomials over different variable lists");
    }

    void drop_dead_terms() {
        if constexpr (std::is_same_v<C, double>) {
            double biggest = 0;
            for (const auto& [m, c] : terms_)
                biggest = std::max(biggest, detail::coeff_abs(c));
            const double dead = biggest * 1e-12;
            for (auto it = terms_.begin(); it != terms_.end();) {
                if (detail::coeff_abs(it->second) <= dead)
                    it = terms_.erase(it);
                else
                    ++it;
            }
        }
    }

    std::vector<std::string> vars_;
    std::map<Monomial, C, GrlexLess> terms_;
};

using Poly = Polynomial<Rational>;
using PolyF = Polynomial<double>;

// Lie derivative of phi along the vector field: sum_i dphi/dx_i * field_i.
template <class C>
Polynomial<C> lie_derivative(const Polynomial<C>& phi,
                             const std::vector<Polynomial<C>>& field) {
    if (field.size() != phi.variables().size())
        throw PolyError("lie_derivative: field has wrong number of components");
    Polynomial<C> r(phi.variables());
    for (std::size_t i = 0; i < field.size(); ++i)
        r = r + phi.derivative(i) * field[i];
    return r;
}

inline PolyF to_float(const Poly& p) {
    PolyF r(p.variables());
    for (const auto& [m, c] : p.terms()) r.add_term(m, to_double(c));
    return r;
}

// ---------------------------------------------------------------------------
// text rendering: degree-ascending, within a degree the first variable binds
// strongest, e.g.  -22/49 + 319/931*x1 - 251/931*x2 + 239/931*x1^2
// ---------------------------------------------------------------------------

inline std::string coeff_to_text(const Rational& c) { return to_string(c); }
inline std::string coeff_to_text(double c) {
    std::ostringstream os;
    os.precision(17);
    os << c;
    return os.str();
}

template <class C>
std::string to_string(const Polynomial<C>& p) {
    if (p.is_zero()) return "0";
    std::vector<std::pair<Monomial, C>> ts(p.terms().begin(), p.terms().end());
    std::sort(ts.begin(), ts.end(), [](const auto& a, const auto& b) {
        int da = a.first.degree(), db = b.first.degree();
        if (da != db) return da < db;
        return b.first.exponents < a.first.exponents;
    });
    std::string out;
    bool first = true;
    for (const auto& [m, c] : ts) {
        std::string cs = coeff_to_text(c);
        bool neg = !cs.empty() && cs[0] == '-';
        if (neg) cs = cs.substr(1);
        if (first) {
            if (neg) out += "-";
            first = false;
        } else {
            out += neg ? " - " : " + ";
        }
        if (m.is_constant()) {
            out += cs;
        } else if (cs == "1") {
            out += monomial_to_string(m, p.variables());
        } else {
            out += cs + "*" + monomial_to_string(m, p.variables());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// expression parser
//
// Grammar (usual precedence; '^' only with a nonnegative integer exponent):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*      (also implicit '*' after a number)
//   factor := ('-'|'+') factor | primary ('^' integer)?
//   primary:= number | variable | '(' expr ')'
// Division is restricted to a nonzero constant divisor.
// ---------------------------------------------------------------------------

struct ParseError : std::runtime_error {
    std::size_t position;
    ParseError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " (at offset " + std::to_string(pos) + ")"),
          position(pos) {}
};

namespace detail {

struct Token {
    enum Kind { Number, Ident, Op, End } kind;
    std::string text;
    std::size_t pos;
};

inline std::vector<Token> tokenize_expr(const std::string& s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < s.size() &&
                   (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.'))
                ++j;
            out.push_back({Token::Number, s.substr(i, j - i), i});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) ||
                                    s[j] == '_'))
                ++j;
            if (j < s.size() && s[j] == '\'') ++j;  // primed next-state name
            out.push_back({Token::Ident, s.substr(i, j - i), i});
            i = j;
            continue;
        }
        if (std::string("+-*/^()").find(c) != std::string::npos) {
            out.push_back({Token::Op, std::string(1, c), i});
            ++i;
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", i);
    }
    out.push_back({Token::End, "", s.size()});
    return out;
}

class ExprParser {
public:
    ExprParser(const std::string& text, const std::vector<std::string>& vars)
        : toks_(tokenize_expr(text)), vars_(vars) {}

    Poly parse() {
        Poly p = parse_expr();
        if (cur().kind != Token::End)
            throw ParseError("trailing input after expression", cur().pos);
        return p;
    }

private:
    const Token& cur() const { return toks_[idx_]; }
    void advance() { ++idx_; }
    bool is_op(const char* o) const {
        return cur().kind == Token::Op && cur().text == o;
    }

    Poly parse_expr() {
        Poly acc = parse_term();
        while (is_op("+") || is_op("-")) {
            bool plus = cur().text == "+";
            advance();
            Poly t = parse_term();
            acc = plus ? acc + t : acc - t;
        }
        return acc;
    }

    Poly parse_term() {
        Poly acc = parse_factor();
        for (;;) {
            if (is_op("*")) {
                advance();
                acc = acc * parse_factor();
            } else if (is_op("/")) {
                std::size_t pos = cur().pos;
                advance();
                Poly d = parse_factor();
                if (d.degree() != 0 || d.is_zero()) {
                    if (d.is_zero()) throw ParseError("division by zero", pos);
                    throw ParseError("division only by a nonzero constant", pos);
                }
                Rational inv = Rational(1) / d.coefficient(Monomial(vars_.size()));
                acc = acc * inv;
            } else if (cur().kind == Token::Ident && last_was_number_) {
                // coefficient written directly against a variable: 319/931x1
                acc = acc * parse_factor();
            } else if (is_op("(") && last_was_number_) {
                acc = acc * parse_factor();
            } else {
                break;
            }
        }
        return acc;
    }

    Poly parse_factor() {
        last_was_number_ = false;
        if (is_op("-")) {
            advance();
            return -parse_factor();
        }
        if (is_op("+")) {
            advance();
            return parse_factor();
        }
        Poly base = parse_primary();
        if (is_op("^")) {
            std::size_t pos = cur().pos;
            advance();
            if (cur().kind != Token::Number ||
                cur().text.find('.') != std::string::npos)
                throw ParseError("exponent must be a nonnegative integer", pos);
            long e = std::stol(cur().text);
            advance();
            Poly acc(vars_, Rational(1));
            for (long k = 0; k < e; ++k) acc = acc * base;
            last_was_number_ = false;
            return acc;
        }
        return base;
    }

    Poly parse_primary() {
        if (cur().kind == Token::Number) {
            Rational c = rational_from_string(cur().text);
            advance();
            last_was_number_ = true;
            return Poly(vars_, c);
        }
        if (cur().kind == Token::Ident) {
            auto it = std::find(vars_.begin(), vars_.end(), cur().text);
            if (it == vars_.end())
                throw ParseError("undeclared variable '" + cur().text + "'",
                                 cur().pos);
            std::size_t i = static_cast<std::size_t>(it - vars_.begin());
            advance();
            last_was_number_ = false;
            return Poly::variable(vars_, i);
        }
        if (is_op("(")) {
            advance();
            Poly p = parse_expr();
            if (!is_op(")")) throw ParseError("expected ')'", cur().pos);
            advance();
            last_was_number_ = false;
            return p;
        }
        throw ParseError("expected a number, variable or '('", cur().pos);
    }

    std::vector<Token> toks_;
    std::size_t idx_ = 0;
    const std::vector<std::string>& vars_;
    bool last_was_number_ = false;
};

}  // namespace detail

inline Poly parse_polynomial(const std::string& text,
                             const std::vector<std::string>& vars) {
    return detail::ExprParser(text, vars).parse();
}

}  // namespace invforge
