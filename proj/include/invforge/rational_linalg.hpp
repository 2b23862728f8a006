#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "invforge/rational.hpp"

namespace invforge {

using RatVec = std::vector<Rational>;
using RatMat = std::vector<std::vector<Rational>>;  // dense, row major

// Symmetric rational matrix.
struct RationalMatrix {
    std::size_t n = 0;
    std::vector<Rational> a;  // n*n entries, kept symmetric

    RationalMatrix() = default;
    explicit RationalMatrix(std::size_t n_) : n(n_), a(n_ * n_, Rational(0)) {}

    Rational& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
    const Rational& at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
    void set_sym(std::size_t i, std::size_t j, const Rational& v) {
        at(i, j) = v;
        at(j, i) = v;
    }
    static RationalMatrix identity(std::size_t n) {
        RationalMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1;
        return m;
    }
    bool operator==(const RationalMatrix&) const = default;
};

inline Eigen::MatrixXd to_eigen(const RationalMatrix& m) {
    Eigen::MatrixXd e(m.n, m.n);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = 0; j < m.n; ++j) e(i, j) = to_double(m.at(i, j));
    return e;
}

// ---------------------------------------------------------------------------
// exact positive-semidefiniteness test: symmetric elimination with 1x1 pivots
// chosen as the largest remaining diagonal entry. Returns either the pivot
// values of the factorization or a rational vector z with z^T M z < 0.
// ---------------------------------------------------------------------------

struct PsdResult {
    bool psd = false;
    RatVec pivot_values;                // D factors, elimination order (psd)
    std::vector<std::size_t> pivot_order;
    RatVec witness;                     // z with z^T M z < 0 (not psd)
    Rational witness_value;
};

inline Rational quadratic_form(const RationalMatrix& m, const RatVec& z) {
    Rational acc(0);
    for (std::size_t i = 0; i < m.n; ++i) {
        if (z[i] == 0) continue;
        for (std::size_t j = 0; j < m.n; ++j) {
            if (z[j] == 0) continue;
            acc += z[i] * m.at(i, j) * z[j];
        }
    }
    return acc;
}

inline PsdResult exact_psd_check(const RationalMatrix& input) {
    const std::size_t n = input.n;
    RationalMatrix w = input;
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;

    struct Step {
        std::size_t pivot;
        Rational d;
        std::vector<std::pair<std::size_t, Rational>> row;  // pre-elimination
    };
    std::vector<Step> steps;
    PsdResult res;

    auto lift_witness = [&](RatVec z) {
        // complete the square through the recorded pivots, newest first
        for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
            Rational s(0);
            for (const auto& [j, v] : it->row) s += v * z[j];
            z[it->pivot] = -s / it->d;
        }
        res.witness = std::move(z);
        res.witness_value = quadratic_form(input, res.witness);
        res.psd = false;
    };

    while (!active.empty()) {
        // a negative diagonal settles it immediately
        for (std::size_t i : active) {
            if (w.at(i, i) < 0) {
                RatVec z(n, Rational(0));
                z[i] = 1;
                lift_witness(std::move(z));
                return res;
            }
        }
        std::size_t best = active[0];
        for (std::size_t i : active)
            if (w.at(i, i) > w.at(best, best)) best = i;
        if (w.at(best, best) == 0) {
            // all remaining diagonals are zero; any off-diagonal kills PSD
            for (std::size_t i : active)
                for (std::size_t j : active) {
                    if (i >= j) continue;
                    if (w.at(i, j) != 0) {
                        RatVec z(n, Rational(0));
                        z[i] = 1;
                        z[j] = w.at(i, j) > 0 ? Rational(-1) : Rational(1);
                        lift_witness(std::move(z));
                        return res;
                    }
                }
            break;  // remaining block is zero: PSD
        }
        const Rational d = w.at(best, best);
        Step step{best, d, {}};
        for (std::size_t j : active)
            if (j != best) step.row.emplace_back(j, w.at(best, j));
        // Schur complement on the remaining indices
        for (std::size_t i : active) {
            if (i == best) continue;
            const Rational li = w.at(i, best) / d;
            if (li == 0) continue;
            for (std::size_t j : active) {
                if (j == best) continue;
                w.at(i, j) -= li * w.at(best, j);
            }
        }
        res.pivot_values.push_back(d);
        res.pivot_order.push_back(best);
        steps.push_back(std::move(step));
        active.erase(std::find(active.begin(), active.end(), best));
    }
    res.psd = true;
    return res;
}

// ---------------------------------------------------------------------------
// dense rational elimination utilities
// ---------------------------------------------------------------------------

// Reduced row echelon form in place; returns pivot column per row (rank rows).
inline std::vector<std::size_t> rref(RatMat& m) {
    std::vector<std::size_t> pivots;
    if (m.empty()) return pivots;
    const std::size_t rows = m.size(), cols = m[0].size();
    std::size_t r = 0;
    for (std::size_t c = 0; c < cols && r < rows; ++c) {
        std::size_t p = r;
        while (p < rows && m[p][c] == 0) ++p;
        if (p == rows) continue;
        std::swap(m[p], m[r]);
        const Rational inv = Rational(1) / m[r][c];
        for (std::size_t j = c; j < cols; ++j) m[r][j] *= inv;
        for (std::size_t i = 0; i < rows; ++i) {
            if (i == r || m[i][c] == 0) continue;
            const Rational f = m[i][c];
            for (std::size_t j = c; j < cols; ++j) m[i][j] -= f * m[r][j];
        }
        pivots.push_back(c);
        ++r;
    }
    return pivots;
}

// Basis of {x : Ax = 0}; each entry is one basis vector.
inline std::vector<RatVec> nullspace(RatMat a) {
    if (a.empty()) return {};
    const std::size_t cols = a[0].size();
    auto pivots = rref(a);
    std::vector<bool> is_pivot(cols, false);
    for (auto c : pivots) is_pivot[c] = true;
    std::vector<RatVec> basis;
    for (std::size_t f = 0; f < cols; ++f) {
        if (is_pivot[f]) continue;
        RatVec v(cols, Rational(0));
        v[f] = 1;
        for (std::size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -a[r][f];
        basis.push_back(std::move(v));
    }
    return basis;
}

// One solution of Ax = b, if consistent.
inline std::optional<RatVec> solve_consistent(RatMat a, RatVec b) {
    if (a.empty()) return RatVec{};
    const std::size_t cols = a[0].size();
    for (std::size_t i = 0; i < a.size(); ++i) a[i].push_back(b[i]);
    auto pivots = rref(a);
    // a pivot in the augmented column means inconsistency
    if (!pivots.empty() && pivots.back() == cols) return std::nullopt;
    RatVec x(cols, Rational(0));
    for (std::size_t r = 0; r < pivots.size(); ++r) x[pivots[r]] = a[r][cols];
    return x;
}

// Solves a symmetric positive definite rational system by elimination.
inline std::optional<RatVec> solve_spd(RatMat g, RatVec b) {
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) g[i].push_back(b[i]);
    auto pivots = rref(g);
    if (pivots.size() != n || (n && pivots.back() == n)) return std::nullopt;
    RatVec x(n, Rational(0));
    for (std::size_t r = 0; r < pivots.size(); ++r) x[pivots[r]] = g[r][n];
    return x;
}

// Minimum weighted-norm correction: delta minimizing sum_i w_i delta_i^2
// subject to A delta = r. Weights must be positive. Returns nullopt when the
// system is inconsistent.
inline std::optional<RatVec> min_norm_correction(const RatMat& a_in,
                                                 const RatVec& w,
                                                 const RatVec& r_in) {
    if (a_in.empty()) return RatVec{};
    const std::size_t cols = a_in[0].size();
    // select independent rows, checking the dropped ones stay consistent
    RatMat aug = a_in;
    for (std::size_t i = 0; i < aug.size(); ++i) aug[i].push_back(r_in[i]);
    {
        RatMat probe = aug;
        auto pivots = rref(probe);
        if (!pivots.empty() && pivots.back() == cols) return std::nullopt;
    }
    // independent row subset of A
    std::vector<std::size_t> keep;
    {
        RatMat work;
        std::vector<std::size_t> kept_rows;
        for (std::size_t i = 0; i < a_in.size(); ++i) {
            work.push_back(a_in[i]);
            kept_rows.push_back(i);
            RatMat probe = work;
            if (rref(probe).size() < work.size()) {
                work.pop_back();
                kept_rows.pop_back();
            }
        }
        keep = kept_rows;
    }
    const std::size_t m = keep.size();
    RatMat g(m, RatVec(m, Rational(0)));
    RatVec rhs(m);
    for (std::size_t i = 0; i < m; ++i) {
        rhs[i] = r_in[keep[i]];
        for (std::size_t j = i; j < m; ++j) {
            Rational acc(0);
            for (std::size_t k = 0; k < cols; ++k) {
                const Rational& x = a_in[keep[i]][k];
                const Rational& y = a_in[keep[j]][k];
                if (x != 0 && y != 0) acc += x * y / w[k];
            }
            g[i][j] = acc;
            g[j][i] = acc;
        }
    }
    auto lambda = solve_spd(std::move(g), std::move(rhs));
    if (!lambda) return std::nullopt;
    RatVec delta(cols, Rational(0));
    for (std::size_t k = 0; k < cols; ++k) {
        Rational acc(0);
        for (std::size_t i = 0; i < m; ++i) {
            const Rational& x = a_in[keep[i]][k];
            if (x != 0) acc += x * (*lambda)[i];
        }
        if (acc != 0) delta[k] = acc / w[k];
    }
    return delta;
}

}  // namespace invforge
