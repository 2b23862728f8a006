#pragma once

#include <Eigen/Dense>

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "invforge/rational_linalg.hpp"
#include "invforge/sosgen.hpp"

namespace invforge {

struct RecoverySettings {
    mpz_class denom_bound = 1000;   // D, bound on the common denominator
    double tolerance = 1e-2;        // tau
    double offdiag_zero_tol = 1e-6;
    int gn_max_iters = 50;
    double gn_target = 1e-12;
    double rank_tol = 1e-9;
};

struct RecoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoRationalWithinTolerance : RecoveryError {
    using RecoveryError::RecoveryError;
};
struct NotDiagonallyDominant : RecoveryError {
    using RecoveryError::RecoveryError;
};
struct StalledRefinement : RecoveryError {
    using RecoveryError::RecoveryError;
};
struct ProjectionLeavesCone : RecoveryError {
    using RecoveryError::RecoveryError;
};

// ---------------------------------------------------------------------------
// simultaneous Diophantine approximation: rationals p_i/q with one common
// denominator q <= D and max_i |v_i - p_i/q| <= tau; the smallest admissible
// q wins. Small bounds are searched exhaustively; larger ones fall back to
// continued-fraction convergent denominators and their merges.
// ---------------------------------------------------------------------------

namespace recover_detail {

inline std::vector<mpz_class> convergent_denominators(double x,
                                                      const mpz_class& bound) {
    std::vector<mpz_class> out;
    double y = std::fabs(x);
    mpz_class h0 = 0, h1 = 1;  // denominators of successive convergents
    for (int it = 0; it < 64; ++it) {
        double fl = std::floor(y);
        if (fl > 1e18) break;
        mpz_class a(fl);
        mpz_class h2 = a * h1 + h0;
        if (h2 > bound) break;
        if (h2 > 0) out.push_back(h2);
        h0 = h1;
        h1 = h2;
        double frac = y - fl;
        if (frac < 1e-15) break;
        y = 1.0 / frac;
    }
    return out;
}

// Walks the (finite) continued fraction of a double exactly; returns the
// convergent with the smallest q whose error is <= prefer_tol, or failing
// that the best convergent with denominator <= bound.
inline Rational best_effort_rational(double x, const mpz_class& bound,
                                     double prefer_tol) {
    Rational exact = rational_from_double(x);
    Rational prefer = rational_from_double(prefer_tol);
    mpz_class h0 = 1, h1, k0 = 0, k1 = 1;  // p_{-1}=1, q_{-1}=0, p_0=a0, q_0=1
    Rational rem = exact;
    mpz_class a;
    {
        mpz_fdiv_q(a.get_mpz_t(), rem.get_num().get_mpz_t(),
                   rem.get_den().get_mpz_t());
    }
    h1 = a;
    Rational best(h1, k1);
    best.canonicalize();
    rem = rem - Rational(a);
    for (int it = 0; it < 256; ++it) {
        if (abs(best - exact) <= prefer) return best;
        if (rem == 0) break;
        rem = Rational(1) / rem;
        mpz_fdiv_q(a.get_mpz_t(), rem.get_num().get_mpz_t(),
                   rem.get_den().get_mpz_t());
        rem = rem - Rational(a);
        mpz_class h2 = a * h1 + h0;
        mpz_class k2 = a * k1 + k0;
        if (k2 > bound) break;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        best = Rational(h1, k1);
        best.canonicalize();
    }
    return best;
}

inline bool try_denominator(const std::vector<double>& v, const mpz_class& q,
                            const Rational& tau, std::vector<Rational>& out) {
    out.clear();
    out.reserve(v.size());
    Rational qr(q);
    for (double x : v) {
        Rational exact = rational_from_double(x);
        mpz_class p = round_to_integer(exact * qr);
        Rational cand(p, q);
        cand.canonicalize();
        if (abs(cand - exact) > tau) return false;
        out.push_back(cand);
    }
    return true;
}

}  // namespace recover_detail

struct DiophantineResult {
    std::vector<Rational> values;
    mpz_class denominator;  // the common q actually used
};

inline DiophantineResult diophantine_recover(const std::vector<double>& v,
                                             const mpz_class& denom_bound,
                                             double tolerance) {
    if (denom_bound < 1)
        throw std::invalid_argument("diophantine_recover: need D >= 1");
    if (!(tolerance > 0))
        throw std::invalid_argument("diophantine_recover: need tau > 0");
    const Rational tau = rational_from_double(tolerance);
    std::vector<Rational> cand;
    if (denom_bound <= 200000) {
        for (mpz_class q = 1; q <= denom_bound; ++q)
            if (recover_detail::try_denominator(v, q, tau, cand))
                return {cand, q};
    } else {
        std::set<mpz_class> qs;
        for (mpz_class q = 1; q <= 1024; ++q) qs.insert(q);
        for (double x : v)
            for (const auto& q : recover_detail::convergent_denominators(x, denom_bound))
                qs.insert(q);
        // lcm merges of convergent denominators, capped at the bound
        std::vector<mpz_class> base(qs.begin(), qs.end());
        for (const auto& a : base)
            for (const auto& b : base) {
                mpz_class l;
                mpz_lcm(l.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
                if (l <= denom_bound) qs.insert(l);
            }
        for (const auto& q : qs)
            if (recover_detail::try_denominator(v, q, tau, cand)) return {cand, q};
    }
    throw NoRationalWithinTolerance(
        "no rational vector with common denominator <= " +
        denom_bound.get_str() + " within tolerance");
}

// Largest p/q <= x with q <= D (used for margins, which must stay positive
// and may only be rounded down).
inline Rational best_lower_rational(double x, const mpz_class& denom_bound) {
    Rational exact = rational_from_double(x);
    Rational best;
    bool have = false;
    // exhaustive over q for small bounds; floor at the bound otherwise
    if (denom_bound <= 200000) {
        for (mpz_class q = 1; q <= denom_bound; ++q) {
            mpz_class p;
            mpz_class num = exact.get_num() * q;
            mpz_fdiv_q(p.get_mpz_t(), num.get_mpz_t(), exact.get_den().get_mpz_t());
            Rational cand(p, q);
            cand.canonicalize();
            if (!have || cand > best) {
                best = cand;
                have = true;
            }
            if (best == exact) break;
        }
    } else {
        mpz_class p;
        mpz_class num = exact.get_num() * denom_bound;
        mpz_fdiv_q(p.get_mpz_t(), num.get_mpz_t(), exact.get_den().get_mpz_t());
        best = Rational(p, denom_bound);
        best.canonicalize();
    }
    return best;
}

// ---------------------------------------------------------------------------
// multiplier block recovery
// ---------------------------------------------------------------------------

// Nearly diagonal numeric blocks round entrywise: off-diagonals to zero, each
// diagonal entry through diophantine_recover, clamped nonnegative.
inline RationalMatrix round_diagonal_block(const Eigen::MatrixXd& m,
                                           const RecoverySettings& cfg) {
    const std::size_t n = static_cast<std::size_t>(m.rows());
    double maxdiag = 0;
    for (std::size_t i = 0; i < n; ++i) maxdiag = std::max(maxdiag, m(i, i));
    double offmax = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) offmax = std::max(offmax, std::fabs(m(i, j)));
    if (offmax > cfg.offdiag_zero_tol * std::max(maxdiag, 1.0))
        throw NotDiagonallyDominant("off-diagonal mass too large");
    RationalMatrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (m(i, i) < -cfg.offdiag_zero_tol)
            throw NotDiagonallyDominant("negative diagonal entry");
        double d = std::max(0.0, m(i, i));
        auto r = diophantine_recover({d}, cfg.denom_bound, cfg.tolerance);
        out.at(i, i) = r.values[0] < 0 ? Rational(0) : r.values[0];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gauss-Newton refinement of a stage-2 block. The block is parameterized by a
// square factor B = L L^T so iterates stay PSD; the residual is the exact
// coefficient-matching system A(B) = rhs of the family.
// ---------------------------------------------------------------------------

struct GnResult {
    Eigen::MatrixXd block;
    double residual_norm = 0;
    int iterations = 0;
};

inline GnResult gauss_newton_refine(const Stage2Family& fam,
                                    const Eigen::MatrixXd& start,
                                    const RecoverySettings& cfg) {
    const std::size_t s = fam.basis.size();
    const std::size_t rows = fam.a.size();
    const std::size_t nsym = s * (s + 1) / 2;
    Eigen::MatrixXd af(rows, nsym);
    Eigen::VectorXd rhs(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        rhs[r] = to_double(fam.rhs[r]);
        for (std::size_t k = 0; k < nsym; ++k) af(r, k) = to_double(fam.a[r][k]);
    }
    auto sym_index = [&](std::size_t i, std::size_t j) {
        return i * s - i * (i - 1) / 2 + (j - i);
    };
    auto vec_of = [&](const Eigen::MatrixXd& b) {
        Eigen::VectorXd v(nsym);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = i; j < s; ++j) v[sym_index(i, j)] = b(i, j);
        return v;
    };

    // PSD-projected factor start
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (start + start.transpose()));
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd l =
        es.eigenvectors() * ev.cwiseSqrt().asDiagonal();

    auto resid_of = [&](const Eigen::MatrixXd& fac) {
        return (af * vec_of(fac * fac.transpose()) - rhs).eval();
    };

    GnResult out;
    Eigen::VectorXd res = resid_of(l);
    double rn = res.norm();
    int flat = 0;
    int iter = 0;
    for (; iter < cfg.gn_max_iters && rn > cfg.gn_target; ++iter) {
        // jacobian wrt the factor entries: d<A,LL^T>/dL = 2 (A L)
        Eigen::MatrixXd jac(rows, s * s);
        for (std::size_t r = 0; r < rows; ++r) {
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s, s);
            for (std::size_t i = 0; i < s; ++i)
                for (std::size_t j = i; j < s; ++j) {
                    double c = af(r, sym_index(i, j));
                    if (i == j) a(i, i) = c;
                    else {
                        a(i, j) = c / 2;
                        a(j, i) = c / 2;
                    }
                }
            Eigen::MatrixXd g = 2.0 * (a * l);
            for (std::size_t p = 0; p < s; ++p)
                for (std::size_t q = 0; q < s; ++q) jac(r, p * s + q) = g(p, q);
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
        Eigen::VectorXd step = cod.solve(-res);
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            Eigen::MatrixXd lt = l;
            for (std::size_t p = 0; p < s; ++p)
                for (std::size_t q = 0; q < s; ++q) lt(p, q) += t * step[p * s + q];
            Eigen::VectorXd rs = resid_of(lt);
            if (rs.norm() < rn) {
                double drop = (rn - rs.norm()) / std::max(rn, 1e-300);
                flat = drop < 1e-14 ? flat + 1 : 0;
                l = lt;
                res = rs;
                rn = rs.norm();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) ++flat;
        if (flat >= 5) {
            if (rn > 10 * cfg.gn_target)
                throw StalledRefinement(
                    "relative residual decrease below 1e-14 for 5 iterations "
                    "at residual " + std::to_string(rn));
            break;
        }
    }
    out.block = l * l.transpose();
    out.residual_norm = rn;
    out.iterations = iter;
    return out;
}

// ---------------------------------------------------------------------------
// rational PSD projection of a refined stage-2 block
// ---------------------------------------------------------------------------

namespace recover_detail {

inline RationalMatrix recover_entrywise(const Eigen::MatrixXd& m,
                                        const RecoverySettings& cfg) {
    // entry denominators are internal; they only seed the exact projection,
    // so a finer bound than the user-facing D is used
    mpz_class bound = cfg.denom_bound * 1000;
    if (bound < 1000000) bound = 1000000;
    const std::size_t n = static_cast<std::size_t>(m.rows());
    RationalMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double x = 0.5 * (m(i, j) + m(j, i));
            out.set_sym(i, j, best_effort_rational(x, bound, 1e-9));
        }
    return out;
}

inline RatVec sym_vec(const RationalMatrix& m) {
    RatVec v;
    v.reserve(m.n * (m.n + 1) / 2);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = i; j < m.n; ++j) v.push_back(m.at(i, j));
    return v;
}

inline RationalMatrix sym_unvec(const RatVec& v, std::size_t n) {
    RationalMatrix m(n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m.set_sym(i, j, v[k++]);
    return m;
}

}  // namespace recover_detail

// Turns a refined float block into an exact rational PSD matrix satisfying
// the family equalities A(M) = rhs exactly. Full-rank blocks go through
// entrywise recovery plus exact orthogonal projection; rank-deficient blocks
// recover a rational kernel first and project the compressed block.
inline RationalMatrix project_to_rational_psd(const Eigen::MatrixXd& m_in,
                                              const Stage2Family& fam,
                                              const RecoverySettings& cfg) {
    const std::size_t n = static_cast<std::size_t>(m_in.rows());
    Eigen::MatrixXd m = 0.5 * (m_in + m_in.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const double lmin = es.eigenvalues().minCoeff();

    if (lmin >= cfg.rank_tol) {
        // full-rank path
        RationalMatrix guess = recover_detail::recover_entrywise(m, cfg);
        RatVec x = recover_detail::sym_vec(guess);
        RatVec resid(fam.rhs);
        for (std::size_t r = 0; r < fam.a.size(); ++r)
            for (std::size_t k = 0; k < x.size(); ++k)
                if (fam.a[r][k] != 0) resid[r] -= fam.a[r][k] * x[k];
        if (!fam.a.empty()) {
            auto delta = min_norm_correction(fam.a, fam.weights, resid);
            if (!delta)
                throw ProjectionLeavesCone(
                    "equalities are inconsistent for this block");
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += (*delta)[k];
        }
        RationalMatrix out = recover_detail::sym_unvec(x, n);
        if (!exact_psd_check(out).psd)
            throw ProjectionLeavesCone("projected matrix is not positive semidefinite");
        return out;
    }

    // singular path: rational kernel, compress, project, embed
    std::size_t kdim = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] < cfg.rank_tol) ++kdim;
    RatMat kernel_t;  // kdim x n
    for (std::size_t v = 0; v < kdim; ++v) {
        Eigen::VectorXd kv = es.eigenvectors().col(v);
        double scale = kv.cwiseAbs().maxCoeff();
        if (scale <= 0) throw ProjectionLeavesCone("degenerate kernel vector");
        kv /= scale;
        RatVec row;
        mpz_class kb = cfg.denom_bound * 1000;
        if (kb < 1000000) kb = 1000000;
        for (std::size_t i = 0; i < n; ++i)
            row.push_back(recover_detail::best_effort_rational(kv[i], kb, 1e-9));
        kernel_t.push_back(std::move(row));
    }
    // rational orthogonal complement of the kernel
    auto comp = nullspace(kernel_t);  // vectors b with K b = 0
    const std::size_t r = comp.size();
    if (r + kdim != n)
        throw ProjectionLeavesCone("kernel recovery lost rank");
    if (r == 0) {
        RationalMatrix zero(n);
        for (std::size_t row_i = 0; row_i < fam.a.size(); ++row_i)
            if (fam.rhs[row_i] != 0)
                throw ProjectionLeavesCone("zero block cannot match the residual");
        return zero;
    }
    // compressed system: A(B Z B^T) = rhs, sym entries of Z as unknowns
    RatMat bmat(n, RatVec(r, Rational(0)));  // columns are complement basis
    for (std::size_t c = 0; c < r; ++c)
        for (std::size_t i = 0; i < n; ++i) bmat[i][c] = comp[c][i];
    Eigen::MatrixXd bf(n, r);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < r; ++c) bf(i, c) = to_double(bmat[i][c]);
    // float compressed start: Z = pinv(B) M pinv(B)^T
    Eigen::MatrixXd pinv =
        (bf.transpose() * bf).ldlt().solve(bf.transpose());
    Eigen::MatrixXd zf = pinv * m * pinv.transpose();

    auto sym_index_r = [&](std::size_t i, std::size_t j) {
        return i * r - i * (i - 1) / 2 + (j - i);
    };
    const std::size_t nsym_r = r * (r + 1) / 2;
    RatMat a_comp(fam.a.size(), RatVec(nsym_r, Rational(0)));
    for (std::size_t row_i = 0; row_i < fam.a.size(); ++row_i) {
        // A_row compressed: B^T A B with A rebuilt from the sym entries
        RationalMatrix a(n);
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                const Rational& c = fam.a[row_i][k++];
                if (c == 0) continue;
                if (i == j) a.at(i, i) = c;
                else {
                    a.at(i, j) = c / 2;
                    a.at(j, i) = c / 2;
                }
            }
        for (std::size_t p = 0; p < r; ++p)
            for (std::size_t q = p; q < r; ++q) {
                Rational acc(0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (bmat[i][p] == 0) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        if (a.at(i, j) != 0 && bmat[j][q] != 0)
                            acc += bmat[i][p] * a.at(i, j) * bmat[j][q];
                }
                if (p != q) {
                    Rational acc2(0);
                    for (std::size_t i = 0; i < n; ++i) {
                        if (bmat[i][q] == 0) continue;
                        for (std::size_t j = 0; j < n; ++j)
                            if (a.at(i, j) != 0 && bmat[j][p] != 0)
                                acc2 += bmat[i][q] * a.at(i, j) * bmat[j][p];
                    }
                    a_comp[row_i][sym_index_r(p, q)] = acc + acc2;
                } else {
                    a_comp[row_i][sym_index_r(p, p)] = acc;
                }
            }
    }
    RatVec wz(nsym_r, Rational(1));
    for (std::size_t p = 0; p < r; ++p)
        for (std::size_t q = p + 1; q < r; ++q) wz[sym_index_r(p, q)] = 2;
    RationalMatrix zguess(r);
    {
        mpz_class zb = cfg.denom_bound * 1000;
        if (zb < 1000000) zb = 1000000;
        for (std::size_t p = 0; p < r; ++p)
            for (std::size_t q = p; q < r; ++q)
                zguess.set_sym(p, q,
                               recover_detail::best_effort_rational(
                                   0.5 * (zf(p, q) + zf(q, p)), zb, 1e-9));
    }
    RatVec zx = recover_detail::sym_vec(zguess);
    RatVec resid(fam.rhs);
    for (std::size_t row_i = 0; row_i < fam.a.size(); ++row_i)
        for (std::size_t k = 0; k < zx.size(); ++k)
            if (a_comp[row_i][k] != 0) resid[row_i] -= a_comp[row_i][k] * zx[k];
    if (!a_comp.empty()) {
        auto delta = min_norm_correction(a_comp, wz, resid);
        if (!delta)
            throw ProjectionLeavesCone(
                "equalities are inconsistent on the compressed block");
        for (std::size_t k = 0; k < zx.size(); ++k) zx[k] += (*delta)[k];
    }
    RationalMatrix z = recover_detail::sym_unvec(zx, r);
    if (!exact_psd_check(z).psd)
        throw ProjectionLeavesCone("compressed block is not positive semidefinite");
    RationalMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            Rational acc(0);
            for (std::size_t p = 0; p < r; ++p) {
                if (bmat[i][p] == 0) continue;
                for (std::size_t q = 0; q < r; ++q)
                    if (z.at(p, q) != 0 && bmat[j][q] != 0)
                        acc += bmat[i][p] * z.at(p, q) * bmat[j][q];
            }
            out.set_sym(i, j, acc);
        }
    // exact re-check of the family equalities on the embedded matrix
    RatVec x = recover_detail::sym_vec(out);
    for (std::size_t row_i = 0; row_i < fam.a.size(); ++row_i) {
        Rational acc(0);
        for (std::size_t k = 0; k < x.size(); ++k)
            if (fam.a[row_i][k] != 0) acc += fam.a[row_i][k] * x[k];
        if (acc != fam.rhs[row_i])
            throw ProjectionLeavesCone("embedded block misses an equality");
    }
    return out;
}

}  // namespace invforge
