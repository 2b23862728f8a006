#pragma once

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace invforge {

// Exact rational arithmetic. mpq_class already keeps values reduced with a
// positive denominator, which is the invariant everything downstream relies on.
using Rational = mpq_class;

inline Rational rat(long num, long den = 1) {
    if (den == 0) throw std::invalid_argument("rational with zero denominator");
    Rational r(num, den);
    r.canonicalize();
    return r;
}

// Parses "p", "p/q" or a decimal literal like "4.5" / "-0.01" into an exact
// rational. Decimal literals denote exact powers of ten, never binary floats.
inline Rational rational_from_string(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty rational literal");
    auto dot = text.find('.');
    if (dot == std::string::npos) {
        Rational r;
        if (r.set_str(text, 10) != 0)
            throw std::invalid_argument("bad rational literal: " + text);
        if (r.get_den() == 0)
            throw std::invalid_argument("zero denominator: " + text);
        r.canonicalize();
        return r;
    }
    std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    const std::size_t frac_len = text.size() - dot - 1;
    if (frac_len == 0 || digits.empty())
        throw std::invalid_argument("bad decimal literal: " + text);
    mpz_class num;
    if (num.set_str(digits, 10) != 0)
        throw std::invalid_argument("bad decimal literal: " + text);
    mpz_class den;
    mpz_ui_pow_ui(den.get_mpz_t(), 10, static_cast<unsigned long>(frac_len));
    Rational r(num, den);
    r.canonicalize();
    return r;
}

// Exact conversion: every finite double is a binary rational.
inline Rational rational_from_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite double");
    return Rational(x);
}

inline double to_double(const Rational& r) { return r.get_d(); }

inline std::string to_string(const Rational& r) { return r.get_str(); }

inline Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

inline Rational pow(const Rational& base, unsigned e) {
    mpz_class num, den;
    mpz_pow_ui(num.get_mpz_t(), base.get_num().get_mpz_t(), e);
    mpz_pow_ui(den.get_mpz_t(), base.get_den().get_mpz_t(), e);
    Rational r(num, den);
    r.canonicalize();
    return r;
}

// Nearest integer, halves away from zero.
inline mpz_class round_to_integer(const Rational& r) {
    mpz_class q;
    mpz_class num2 = r.get_num() * 2;
    if (r >= 0) num2 += r.get_den();
    else num2 -= r.get_den();
    mpz_class den2 = r.get_den() * 2;
    mpz_tdiv_q(q.get_mpz_t(), num2.get_mpz_t(), den2.get_mpz_t());
    return q;
}

}  // namespace invforge
