#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace invforge {

// Exponent vector over a fixed, externally owned variable list.
struct Monomial {
    std::vector<int> exponents;

    Monomial() = default;
    explicit Monomial(std::size_t n) : exponents(n, 0) {}
    explicit Monomial(std::vector<int> e) : exponents(std::move(e)) {}
    Monomial(std::initializer_list<int> e) : exponents(e) {}

    int degree() const {
        return std::accumulate(exponents.begin(), exponents.end(), 0);
    }
    std::size_t size() const { return exponents.size(); }
    bool is_constant() const {
        for (int e : exponents)
            if (e != 0) return false;
        return true;
    }

    Monomial operator*(const Monomial& o) const {
        if (exponents.size() != o.exponents.size())
            throw std::invalid_argument("monomial arity mismatch");
        Monomial r(exponents.size());
        for (std::size_t i = 0; i < exponents.size(); ++i)
            r.exponents[i] = exponents[i] + o.exponents[i];
        return r;
    }

    bool operator==(const Monomial& o) const { return exponents == o.exponents; }
    bool operator!=(const Monomial& o) const { return !(*this == o); }
};

// Graded lexicographic order: lower total degree first, then the exponent
// tuples lexicographically with the first variable most significant.
inline bool grlex_less(const Monomial& a, const Monomial& b) {
    int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    return a.exponents < b.exponents;
}

struct GrlexLess {
    bool operator()(const Monomial& a, const Monomial& b) const {
        return grlex_less(a, b);
    }
};

// All C(n+d, d) monomials of total degree <= d, strictly increasing in grlex.
inline std::vector<Monomial> enumerate_monomials(std::size_t n, int d) {
    if (n < 1) throw std::invalid_argument("enumerate_monomials: need n >= 1");
    if (d < 0) throw std::invalid_argument("enumerate_monomials: need d >= 0");
    std::vector<Monomial> out;
    std::vector<int> cur(n, 0);
    // enumerate exponent tuples of fixed total degree deg in ascending lex
    auto rec = [&](auto&& self, std::size_t pos, int remaining) -> void {
        if (pos + 1 == n) {
            cur[pos] = remaining;
            out.emplace_back(cur);
            return;
        }
        for (int e = 0; e <= remaining; ++e) {
            cur[pos] = e;
            self(self, pos + 1, remaining - e);
        }
    };
    for (int deg = 0; deg <= d; ++deg) rec(rec, 0, deg);
    return out;
}

inline std::string monomial_to_string(const Monomial& m,
                                      const std::vector<std::string>& vars) {
    std::string s;
    for (std::size_t i = 0; i < m.exponents.size(); ++i) {
        if (m.exponents[i] == 0) continue;
        if (!s.empty()) s += "*";
        s += vars[i];
        if (m.exponents[i] > 1) s += "^" + std::to_string(m.exponents[i]);
    }
    return s.empty() ? "1" : s;
}

}  // namespace invforge
