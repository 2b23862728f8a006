#pragma once

#include <Eigen/Dense>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "invforge/sosgen.hpp"

namespace invforge {

struct SolverSettings {
    double feas_tol = 1e-8;
    double duality_gap_tol = 1e-8;
    int max_iters = 200;
    double step_fraction = 0.98;
    std::ostream* log = nullptr;
};

enum class SolverStatusKind { Feasible, Infeasible, MaxIters, NumericalFailure };

inline const char* to_string(SolverStatusKind k) {
    switch (k) {
        case SolverStatusKind::Feasible: return "Feasible";
        case SolverStatusKind::Infeasible: return "Infeasible";
        case SolverStatusKind::MaxIters: return "MaxIters";
        case SolverStatusKind::NumericalFailure: return "NumericalFailure";
    }
    return "?";
}

struct SolverStatus {
    SolverStatusKind kind = SolverStatusKind::NumericalFailure;
    double primal_residual = 0, dual_residual = 0, gap = 0;
    int iterations = 0;
    std::string note;  // infeasibility is decided by a divergence heuristic
};

namespace sdp_detail {

struct BlockTerm {
    int block;
    std::vector<std::tuple<int, int, double>> entries;  // i <= j, coef * X_ij
};

// standardized cone form: PSD blocks (original + bound slacks) and free vars
struct Std {
    std::vector<int> bsize;
    std::vector<std::vector<BlockTerm>> rows;  // per kept row
    Eigen::MatrixXd B;                         // kept rows x free vars
    Eigen::VectorXd b;
    Eigen::VectorXd cu;
    std::vector<Eigen::MatrixXd> C;
    std::vector<int> scalar_free;   // scalar -> free index or -1
    std::vector<int> scalar_slack;  // scalar -> cone block or -1
    std::vector<double> scalar_shift;
    std::vector<std::size_t> kept_rows;
    std::size_t dropped_rows = 0;
    std::size_t nblocks_orig = 0;
};

inline Eigen::MatrixXd term_matrix(const BlockTerm& t, int s) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s, s);
    for (const auto& [i, j, c] : t.entries) {
        if (i == j) a(i, i) = c;
        else {
            a(i, j) = c / 2;
            a(j, i) = c / 2;
        }
    }
    return a;
}

inline Std standardize(const SdpProblem& p) {
    Std st;
    st.nblocks_orig = p.blocks.size();
    for (const auto& b : p.blocks) st.bsize.push_back(static_cast<int>(b.size()));

    const std::size_t ns = p.scalars.size();
    st.scalar_free.assign(ns, -1);
    st.scalar_slack.assign(ns, -1);
    st.scalar_shift.assign(ns, 0.0);
    int nfree = 0;
    for (std::size_t s = 0; s < ns; ++s) {
        if (p.scalars[s].lower_bound) {
            st.scalar_slack[s] = static_cast<int>(st.bsize.size());
            st.bsize.push_back(1);
            st.scalar_shift[s] = to_double(*p.scalars[s].lower_bound);
        } else {
            st.scalar_free[s] = nfree++;
        }
    }

    st.C.resize(st.bsize.size());
    for (std::size_t j = 0; j < st.bsize.size(); ++j) {
        if (j < p.blocks.size() && p.blocks[j].in_objective)
            st.C[j] = Eigen::MatrixXd::Identity(st.bsize[j], st.bsize[j]);
        else
            st.C[j] = Eigen::MatrixXd::Zero(st.bsize[j], st.bsize[j]);
    }
    st.cu = Eigen::VectorXd::Zero(nfree);
    for (std::size_t s = 0; s < ns; ++s) {
        if (st.scalar_free[s] >= 0)
            st.cu[st.scalar_free[s]] = p.scalars[s].objective;
        else
            st.C[st.scalar_slack[s]](0, 0) = p.scalars[s].objective;
    }

    // dense row vectors for the rank pre-pass
    std::vector<std::size_t> offset(st.bsize.size() + 1, 0);
    for (std::size_t j = 0; j < st.bsize.size(); ++j)
        offset[j + 1] =
            offset[j] + static_cast<std::size_t>(st.bsize[j]) * (st.bsize[j] + 1) / 2;
    const std::size_t nsym = offset.back();
    const std::size_t m = p.equalities.size();
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(nsym + nfree, m);
    Eigen::VectorXd rhs(m);
    auto sym_off = [&](int blk, int i, int j) {
        int s = st.bsize[blk];
        return offset[blk] + static_cast<std::size_t>(i) * s -
               static_cast<std::size_t>(i) * (i - 1) / 2 + (j - i);
    };
    std::vector<std::vector<BlockTerm>> all_rows(m);
    for (std::size_t k = 0; k < m; ++k) {
        const Equality& eq = p.equalities[k];
        double shift = 0.0;
        std::vector<std::vector<std::tuple<int, int, double>>> per_block(
            st.bsize.size());
        for (const auto& t : eq.gram_terms)
            per_block[t.block].emplace_back(static_cast<int>(t.i),
                                            static_cast<int>(t.j),
                                            to_double(t.coef));
        for (const auto& t : eq.scalar_terms) {
            double c = to_double(t.coef);
            if (st.scalar_free[t.scalar] >= 0) {
                dense(nsym + st.scalar_free[t.scalar], k) += c;
            } else {
                per_block[st.scalar_slack[t.scalar]].emplace_back(0, 0, c);
                shift += c * st.scalar_shift[t.scalar];
            }
        }
        for (std::size_t j = 0; j < per_block.size(); ++j) {
            if (per_block[j].empty()) continue;
            for (const auto& [i, jj, c] : per_block[j])
                dense(sym_off(static_cast<int>(j), i, jj), k) += c;
            all_rows[k].push_back(BlockTerm{static_cast<int>(j), per_block[j]});
        }
        rhs[k] = to_double(eq.rhs) - shift;
    }

    // rank-revealing pre-pass; dependent rows are dropped (consistency of the
    // dropped rows is re-checked on the final iterate by the caller)
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dense);
    qr.setThreshold(1e-10);
    const std::size_t rank = static_cast<std::size_t>(qr.rank());
    std::vector<std::size_t> keep;
    {
        auto perm = qr.colsPermutation().indices();
        for (std::size_t i = 0; i < rank; ++i)
            keep.push_back(static_cast<std::size_t>(perm[static_cast<int>(i)]));
        std::sort(keep.begin(), keep.end());
    }
    st.kept_rows = keep;
    st.dropped_rows = m - keep.size();
    st.b.resize(keep.size());
    st.B = Eigen::MatrixXd::Zero(keep.size(), nfree);
    for (std::size_t r = 0; r < keep.size(); ++r) {
        // equilibrate: monomial-matching rows differ by orders of magnitude
        double scale = dense.col(keep[r]).cwiseAbs().maxCoeff();
        if (scale <= 0) scale = 1.0;
        auto row = std::move(all_rows[keep[r]]);
        for (auto& bt : row)
            for (auto& e : bt.entries) std::get<2>(e) /= scale;
        st.rows.push_back(std::move(row));
        st.b[r] = rhs[keep[r]] / scale;
        for (int f = 0; f < nfree; ++f)
            st.B(r, f) = dense(nsym + f, keep[r]) / scale;
    }
    return st;
}

inline double dot_term(const BlockTerm& t, const Eigen::MatrixXd& x) {
    double acc = 0;
    for (const auto& [i, j, c] : t.entries) acc += c * x(i, j);
    return acc;
}

// largest step alpha with X + alpha*dX still PSD, damped by `frac`
inline double cone_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dx,
                        double frac) {
    Eigen::LLT<Eigen::MatrixXd> llt(x);
    if (llt.info() != Eigen::Success) return 0.0;
    Eigen::MatrixXd l = llt.matrixL();
    Eigen::MatrixXd m = l.triangularView<Eigen::Lower>().solve(dx);
    m = l.triangularView<Eigen::Lower>().solve(m.transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                      Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    if (lo >= 0) return 1.0;
    return std::min(1.0, frac / (-lo));
}

// Nesterov-Todd scaling point W with W S W = X
inline std::optional<Eigen::MatrixXd> nt_scaling(const Eigen::MatrixXd& x,
                                                 const Eigen::MatrixXd& s) {
    Eigen::LLT<Eigen::MatrixXd> lltx(x), llts(s);
    if (lltx.info() != Eigen::Success || llts.info() != Eigen::Success)
        return std::nullopt;
    Eigen::MatrixXd lx = lltx.matrixL();
    Eigen::MatrixXd ls = llts.matrixL();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ls.transpose() * lx,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::VectorXd sv = svd.singularValues();
    if (sv.minCoeff() <= 0) return std::nullopt;
    Eigen::MatrixXd g =
        lx * svd.matrixV() * sv.array().rsqrt().matrix().asDiagonal();
    return g * g.transpose();
}

}  // namespace sdp_detail

struct KktReport {
    double primal_residual = 0;  // over every equality of the problem
    double dual_residual = 0;
    double gap = 0;
};

// Dense primal-dual path-following solver with Nesterov-Todd scaling,
// Mehrotra-style adaptive centering and an augmented KKT solve that carries
// the free (template) variables exactly.
inline std::pair<SolverStatus, RawSolution> solve_sdp(
    const SdpProblem& p, const SolverSettings& cfg = {}) {
    using namespace sdp_detail;
    SolverStatus status;
    RawSolution raw;
    if (p.blocks.empty()) {
        status.kind = SolverStatusKind::NumericalFailure;
        status.note = "problem has no blocks";
        return {status, raw};
    }
    Std st = standardize(p);
    if (cfg.log && st.dropped_rows)
        *cfg.log << "sdp: dropped " << st.dropped_rows
                 << " linearly dependent equality rows\n";

    const std::size_t nb = st.bsize.size();
    const std::size_t m = st.rows.size();
    const int nfree = static_cast<int>(st.B.cols());
    double total_dim = 0;
    for (int s : st.bsize) total_dim += s;

    // pre-materialize the constraint matrices per (row, block)
    std::vector<std::vector<std::pair<std::size_t, Eigen::MatrixXd>>> amats(m);
    std::vector<std::vector<std::size_t>> rows_of_block(nb);
    for (std::size_t k = 0; k < m; ++k)
        for (const auto& t : st.rows[k]) {
            amats[k].emplace_back(static_cast<std::size_t>(t.block),
                                  term_matrix(t, st.bsize[t.block]));
            rows_of_block[t.block].push_back(k);
        }

    const double binf = st.b.size() ? st.b.cwiseAbs().maxCoeff() : 0.0;
    std::vector<Eigen::MatrixXd> X(nb), S(nb);
    for (std::size_t j = 0; j < nb; ++j) {
        X[j] = (1.0 + binf) * Eigen::MatrixXd::Identity(st.bsize[j], st.bsize[j]);
        S[j] = Eigen::MatrixXd::Identity(st.bsize[j], st.bsize[j]);
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(nfree);

    auto apply_a = [&](const std::vector<Eigen::MatrixXd>& xs) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
        for (std::size_t k = 0; k < m; ++k)
            for (const auto& t : st.rows[k]) v[k] += dot_term(t, xs[t.block]);
        return v;
    };
    auto apply_at = [&](const Eigen::VectorXd& yy) {
        std::vector<Eigen::MatrixXd> out(nb);
        for (std::size_t j = 0; j < nb; ++j)
            out[j] = Eigen::MatrixXd::Zero(st.bsize[j], st.bsize[j]);
        for (std::size_t k = 0; k < m; ++k) {
            if (yy[k] == 0) continue;
            for (const auto& [j, a] : amats[k]) out[j] += yy[k] * a;
        }
        return out;
    };

    int stall_count = 0;
    double prev_mu = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter <= cfg.max_iters; ++iter) {
        Eigen::VectorXd rp = st.b - apply_a(X) - st.B * u;
        auto aty = apply_at(y);
        std::vector<Eigen::MatrixXd> Rd(nb);
        double dinf = 0, cinf = 0;
        for (std::size_t j = 0; j < nb; ++j) {
            Rd[j] = st.C[j] - S[j] - aty[j];
            dinf = std::max(dinf, Rd[j].cwiseAbs().maxCoeff());
            cinf = std::max(cinf, st.C[j].cwiseAbs().maxCoeff());
        }
        Eigen::VectorXd ru = st.cu - st.B.transpose() * y;
        double ruinf = nfree ? ru.cwiseAbs().maxCoeff() : 0.0;
        double mu = 0;
        for (std::size_t j = 0; j < nb; ++j) mu += (X[j].cwiseProduct(S[j])).sum();
        double gap_abs = mu;
        mu /= std::max(1.0, total_dim);

        double pobj = st.cu.dot(u), dobj = st.b.dot(y);
        for (std::size_t j = 0; j < nb; ++j) pobj += (st.C[j].cwiseProduct(X[j])).sum();
        double pinf = (rp.size() ? rp.cwiseAbs().maxCoeff() : 0.0) / (1.0 + binf);
        double dres = std::max(dinf / (1.0 + cinf),
                               ruinf / (1.0 + (nfree ? st.cu.cwiseAbs().maxCoeff() : 0.0)));
        double relgap = std::fabs(pobj - dobj) / (1.0 + std::fabs(pobj) + std::fabs(dobj));

        if (cfg.log)
            *cfg.log << "iter " << iter << " mu " << mu << " pinf " << pinf
                     << " dinf " << dres << " gap " << relgap << "\n";

        if (pinf <= cfg.feas_tol && dres <= cfg.feas_tol &&
            (relgap <= cfg.duality_gap_tol || mu <= cfg.duality_gap_tol)) {
            status.kind = SolverStatusKind::Feasible;
            status.iterations = iter;
            status.primal_residual = pinf;
            status.dual_residual = dres;
            status.gap = relgap;
            break;
        }
        if ((dobj > 1e8 || y.cwiseAbs().maxCoeff() > 1e12) &&
            pinf > 10 * cfg.feas_tol) {
            status.kind = SolverStatusKind::Infeasible;
            status.iterations = iter;
            status.primal_residual = pinf;
            status.dual_residual = dres;
            status.gap = relgap;
            status.note = "dual objective diverged while the primal residual "
                          "stayed positive (heuristic, no certificate)";
            break;
        }
        if (stall_count >= 3) {
            status.iterations = iter;
            status.primal_residual = pinf;
            status.dual_residual = dres;
            status.gap = relgap;
            if (pinf > 100 * cfg.feas_tol) {
                status.kind = SolverStatusKind::Infeasible;
                status.note = "step lengths collapsed with a positive primal "
                              "residual (heuristic, no certificate)";
            } else {
                status.kind = SolverStatusKind::NumericalFailure;
                status.note = "step lengths collapsed";
            }
            break;
        }
        if (iter == cfg.max_iters) {
            status.kind = SolverStatusKind::MaxIters;
            status.iterations = iter;
            status.primal_residual = pinf;
            status.dual_residual = dres;
            status.gap = relgap;
            break;
        }

        // NT scaling and the Schur complement of the augmented KKT system
        std::vector<Eigen::MatrixXd> W(nb);
        bool scale_ok = true;
        for (std::size_t j = 0; j < nb; ++j) {
            auto w = nt_scaling(X[j], S[j]);
            if (!w) {
                scale_ok = false;
                break;
            }
            W[j] = *w;
        }
        if (!scale_ok) {
            status.kind = SolverStatusKind::NumericalFailure;
            status.iterations = iter;
            status.note = "iterate left the cone during scaling";
            break;
        }

        Eigen::MatrixXd K =
            Eigen::MatrixXd::Zero(m + nfree, m + nfree);
        for (std::size_t j = 0; j < nb; ++j) {
            if (rows_of_block[j].empty()) continue;
            for (std::size_t k : rows_of_block[j]) {
                const Eigen::MatrixXd* akj = nullptr;
                for (const auto& [bj, a] : amats[k])
                    if (bj == j) akj = &a;
                Eigen::MatrixXd t = W[j] * (*akj) * W[j];
                for (std::size_t l : rows_of_block[j]) {
                    if (l < k) continue;
                    double acc = 0;
                    for (const auto& t2 : st.rows[l])
                        if (static_cast<std::size_t>(t2.block) == j)
                            acc = dot_term(t2, t);
                    K(k, l) += acc;
                    if (l != k) K(l, k) += acc;
                }
            }
        }
        K.block(0, m, m, nfree) = st.B;
        K.block(m, 0, nfree, m) = st.B.transpose();
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

        auto solve_direction = [&](const std::vector<Eigen::MatrixXd>& rc,
                                   std::vector<Eigen::MatrixXd>& dX,
                                   std::vector<Eigen::MatrixXd>& dS,
                                   Eigen::VectorXd& dy, Eigen::VectorXd& du) {
            Eigen::VectorXd g(m + nfree);
            for (std::size_t k = 0; k < m; ++k) {
                double acc = rp[k];
                for (const auto& [j, a] : amats[k])
                    acc -= (a.cwiseProduct(rc[j] - W[j] * Rd[j] * W[j])).sum();
                g[k] = acc;
            }
            g.tail(nfree) = ru;
            Eigen::VectorXd sol = lu.solve(g);
            sol += lu.solve(g - K * sol);  // one refinement pass
            dy = sol.head(m);
            du = sol.tail(nfree);
            auto atdy = apply_at(dy);
            dX.resize(nb);
            dS.resize(nb);
            for (std::size_t j = 0; j < nb; ++j) {
                dS[j] = Rd[j] - atdy[j];
                dX[j] = rc[j] - W[j] * dS[j] * W[j];
                dX[j] = 0.5 * (dX[j] + dX[j].transpose());
                dS[j] = 0.5 * (dS[j] + dS[j].transpose());
            }
        };

        // predictor: pure affine direction fixes the centering weight
        std::vector<Eigen::MatrixXd> rc(nb), dX, dS;
        Eigen::VectorXd dy, du;
        for (std::size_t j = 0; j < nb; ++j) rc[j] = -X[j];
        solve_direction(rc, dX, dS, dy, du);
        double ap = 1.0, ad = 1.0;
        for (std::size_t j = 0; j < nb; ++j) {
            ap = std::min(ap, cone_step(X[j], dX[j], cfg.step_fraction));
            ad = std::min(ad, cone_step(S[j], dS[j], cfg.step_fraction));
        }
        double mu_aff = 0;
        for (std::size_t j = 0; j < nb; ++j)
            mu_aff += ((X[j] + ap * dX[j]).cwiseProduct(S[j] + ad * dS[j])).sum();
        mu_aff = std::max(0.0, mu_aff) / std::max(1.0, total_dim);
        double sigma = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0),
                                  1e-4, 0.9);

        // corrector: recentered direction with the same factorization
        for (std::size_t j = 0; j < nb; ++j) {
            Eigen::LLT<Eigen::MatrixXd> llts(S[j]);
            Eigen::MatrixXd sinv = llts.solve(
                Eigen::MatrixXd::Identity(st.bsize[j], st.bsize[j]));
            rc[j] = sigma * mu * sinv - X[j];
        }
        solve_direction(rc, dX, dS, dy, du);
        // a common step keeps the residuals and the gap contracting together,
        // which stops complementarity from running ahead on infeasible starts
        ap = 1.0;
        ad = 1.0;
        for (std::size_t j = 0; j < nb; ++j) {
            ap = std::min(ap, cone_step(X[j], dX[j], cfg.step_fraction));
            ad = std::min(ad, cone_step(S[j], dS[j], cfg.step_fraction));
        }
        if (pinf > cfg.feas_tol || dres > cfg.feas_tol) ap = ad = std::min(ap, ad);

        // keep the complementarity gap monotone across accepted iterations
        for (int guard = 0; guard < 12; ++guard) {
            double mu_new = 0;
            for (std::size_t j = 0; j < nb; ++j)
                mu_new +=
                    ((X[j] + ap * dX[j]).cwiseProduct(S[j] + ad * dS[j])).sum();
            mu_new /= std::max(1.0, total_dim);
            if (mu_new <= mu * (1.0 + 1e-9) || (ap < 1e-10 && ad < 1e-10)) break;
            ap *= 0.5;
            ad *= 0.5;
        }

        for (std::size_t j = 0; j < nb; ++j) {
            X[j] += ap * dX[j];
            S[j] += ad * dS[j];
        }
        y += ad * dy;
        u += ap * du;

        stall_count = (ap < 1e-8 && ad < 1e-8) ? stall_count + 1 : 0;
        prev_mu = mu;
        (void)gap_abs;
        (void)prev_mu;
    }

    if (status.kind == SolverStatusKind::Feasible ||
        status.kind == SolverStatusKind::MaxIters) {
        raw.blocks.assign(X.begin(), X.begin() + st.nblocks_orig);
        raw.scalars.resize(p.scalars.size());
        for (std::size_t s = 0; s < p.scalars.size(); ++s) {
            if (st.scalar_free[s] >= 0)
                raw.scalars[s] = u[st.scalar_free[s]];
            else
                raw.scalars[s] =
                    st.scalar_shift[s] + X[st.scalar_slack[s]](0, 0);
        }
        raw.dual = y;
    }
    return {status, raw};
}

// Residual report for a solution the solver claimed feasible.
inline KktReport check_kkt(const SdpProblem& p, const RawSolution& raw) {
    using namespace sdp_detail;
    KktReport rep;
    std::vector<Eigen::MatrixXd> blocks = raw.blocks;
    rep.primal_residual = equality_residual(p, blocks, raw.scalars);

    Std st = standardize(p);
    std::vector<Eigen::MatrixXd> aty(st.bsize.size());
    for (std::size_t j = 0; j < st.bsize.size(); ++j)
        aty[j] = Eigen::MatrixXd::Zero(st.bsize[j], st.bsize[j]);
    for (std::size_t k = 0; k < st.rows.size(); ++k)
        for (const auto& t : st.rows[k])
            aty[t.block] += raw.dual[k] * term_matrix(t, st.bsize[t.block]);
    // dual slack implied by S = C - A*(y); gap against the cone variables
    for (std::size_t j = 0; j < st.nblocks_orig; ++j) {
        Eigen::MatrixXd s = st.C[j] - aty[j];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
        rep.dual_residual =
            std::max(rep.dual_residual, std::max(0.0, -es.eigenvalues().minCoeff()));
        rep.gap += std::fabs((s.cwiseProduct(blocks[j])).sum());
    }
    return rep;
}

}  // namespace invforge
