#pragma once

#include <cmath>
#include <iostream>
#include <optional>
#include <string>

#include "invforge/certify.hpp"
#include "invforge/recover.hpp"
#include "invforge/sdp.hpp"

namespace invforge {

struct RunConfig {
    int d = 2;
    std::optional<int> e;  // SOS half-degree; derived from d when absent
    mpz_class denom_bound = 1000;
    double tolerance = 1e-2;
    Mode mode = Mode::PerLocation;
    std::optional<std::pair<int, int>> sweep;  // inclusive degree range
    Rational eps_min = Rational(1, 1000);
    SolverSettings solver;
    RecoverySettings recovery;
    std::ostream* log = nullptr;
    int verbosity = 1;  // 0 quiet, 1 info, 2 debug
};

struct GenerateResult {
    int exit_code = 1;  // 0 certified, 1 none found, 2 recovery failed, 3 input
    std::optional<Certificate> certificate;
    std::string message;
    int certified_degree = -1;
};

namespace pipeline_detail {

inline void logmsg(const RunConfig& cfg, int level, const std::string& msg) {
    if (cfg.log && cfg.verbosity >= level) *cfg.log << msg << "\n";
}

// default 2e = max(2 ceil(d/2), max constraint degree rounded up to even)
inline int default_half_degree(const HybridSystem& sys, int d) {
    int e = (d + 1) / 2;
    int cmax = 0;
    auto scan = [&](const std::vector<Poly>& ps) {
        for (const auto& p : ps) cmax = std::max(cmax, p.degree());
    };
    scan(sys.initial_set.constraints);
    for (const auto& l : sys.locations) {
        scan(l.invariant_set.constraints);
        if (l.unsafe_set) scan(l.unsafe_set->constraints);
    }
    for (const auto& t : sys.transitions) {
        scan(t.guard.constraints);
        scan(t.reset.constraints);
    }
    return std::max(e, (cmax + 1) / 2);
}

// integer per-variable scales from the recognizable bounding boxes of all
// constraint sets; primed variables share their base variable's scale
inline std::vector<Rational> derive_scales(const HybridSystem& sys) {
    const std::size_t n = sys.variables.size();
    std::vector<double> mag(n, 1.0);
    auto absorb = [&](const SemialgebraicSet& set, std::size_t arity) {
        detail::Box box = detail::bounding_box(set, arity);
        for (std::size_t i = 0; i < arity; ++i) {
            if (!box.known[i]) continue;
            std::size_t base = i < n ? i : i - n;
            mag[base] = std::max({mag[base], std::fabs(box.lo[i]),
                                  std::fabs(box.hi[i])});
        }
    };
    absorb(sys.initial_set, n);
    for (const auto& l : sys.locations) {
        absorb(l.invariant_set, n);
        if (l.unsafe_set) absorb(*l.unsafe_set, n);
    }
    for (const auto& t : sys.transitions) {
        absorb(t.guard, n);
        absorb(SemialgebraicSet{t.reset.constraints}, 2 * n);
    }
    std::vector<Rational> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = Rational(std::ceil(mag[i] - 1e-9));
    return s;
}

// substitutes x_i = s_i * u_i exactly (names are kept)
inline Poly scale_poly(const Poly& p, const std::vector<Rational>& s) {
    Poly out(p.variables());
    const std::size_t n = s.size();
    for (const auto& [m, c] : p.terms()) {
        Rational f = c;
        for (std::size_t k = 0; k < m.size(); ++k) {
            const Rational& sk = s[k < n ? k : k - n];
            if (m.exponents[k]) f *= pow(sk, static_cast<unsigned>(m.exponents[k]));
        }
        out.add_term(m, f);
    }
    return out;
}

inline HybridSystem scale_system(const HybridSystem& sys,
                                 const std::vector<Rational>& s) {
    HybridSystem out = sys;
    auto scale_set = [&](SemialgebraicSet& set) {
        for (auto& p : set.constraints) p = scale_poly(p, s);
    };
    scale_set(out.initial_set);
    for (std::size_t li = 0; li < out.locations.size(); ++li) {
        Location& l = out.locations[li];
        scale_set(l.invariant_set);
        if (l.unsafe_set) scale_set(*l.unsafe_set);
        for (std::size_t i = 0; i < l.field.size(); ++i)
            l.field[i] = scale_poly(l.field[i], s) * (Rational(1) / s[i]);
    }
    for (auto& t : out.transitions) {
        scale_set(t.guard);
        for (auto& p : t.reset.constraints) p = scale_poly(p, s);
    }
    return out;
}

// maps a certificate for the scaled system back to the original one:
// invariants phi(x) = phi_s(x/s), Gram blocks by the inverse diagonal
// congruence, margins unchanged
inline Certificate unscale_certificate(const Certificate& cert,
                                       const std::vector<Rational>& s) {
    Certificate out = cert;
    const std::size_t n = s.size();
    auto unscale_poly = [&](const Poly& p) {
        Poly r(p.variables());
        for (const auto& [m, c] : p.terms()) {
            Rational f = c;
            for (std::size_t k = 0; k < m.size(); ++k)
                if (m.exponents[k])
                    f /= pow(s[k < n ? k : k - n],
                             static_cast<unsigned>(m.exponents[k]));
            r.add_term(m, f);
        }
        return r;
    };
    for (auto& [loc, phi] : out.invariants) phi = unscale_poly(phi);
    for (auto& id : out.identities)
        for (auto& slot : id.slots) {
            std::vector<Rational> factor(slot.basis.size(), Rational(1));
            for (std::size_t i = 0; i < slot.basis.size(); ++i)
                for (std::size_t k = 0; k < slot.basis[i].size(); ++k)
                    if (slot.basis[i].exponents[k])
                        factor[i] /= pow(
                            s[k < n ? k : k - n],
                            static_cast<unsigned>(slot.basis[i].exponents[k]));
            for (std::size_t i = 0; i < slot.matrix.n; ++i)
                for (std::size_t j = 0; j < slot.matrix.n; ++j)
                    slot.matrix.at(i, j) *= factor[i] * factor[j];
        }
    return out;
}

struct AttemptSettings {
    mpz_class denom_bound;
    double tolerance;
};

// template coefficients must satisfy the template-only equality rows exactly;
// recovery happens inside their rational null space
struct TemplateRecovery {
    std::map<std::string, Poly> invariants;
    std::map<std::string, Rational> common_denominators;
};

inline std::optional<TemplateRecovery> recover_template(
    const HybridSystem& sys, const Stage1& st, const NumericSolution& sol,
    const AttemptSettings& att, const RunConfig& cfg) {
    std::vector<std::size_t> template_ids;
    std::vector<bool> is_template(st.prob.scalars.size(), false);
    for (const auto& [loc, ids] : st.template_coeffs)
        for (auto id : ids)
            if (!is_template[id]) {
                is_template[id] = true;
                template_ids.push_back(id);
            }
    std::sort(template_ids.begin(), template_ids.end());
    std::map<std::size_t, std::size_t> col_of;
    for (std::size_t k = 0; k < template_ids.size(); ++k)
        col_of[template_ids[k]] = k;

    RatMat relations;
    for (const auto& eq : st.prob.equalities) {
        if (!eq.gram_terms.empty()) continue;
        bool templ_only = true;
        for (const auto& t : eq.scalar_terms)
            if (!is_template[t.scalar]) templ_only = false;
        if (!templ_only || eq.scalar_terms.empty()) continue;
        RatVec row(template_ids.size(), Rational(0));
        for (const auto& t : eq.scalar_terms) row[col_of[t.scalar]] = t.coef;
        relations.push_back(std::move(row));
    }

    Eigen::VectorXd vstar(template_ids.size());
    for (std::size_t k = 0; k < template_ids.size(); ++k)
        vstar[k] = sol.scalars[template_ids[k]];

    RatVec recovered(template_ids.size(), Rational(0));
    if (relations.empty()) {
        std::vector<double> v(vstar.data(), vstar.data() + vstar.size());
        try {
            auto r = diophantine_recover(v, att.denom_bound, att.tolerance);
            for (std::size_t k = 0; k < recovered.size(); ++k)
                recovered[k] = r.values[k];
        } catch (const NoRationalWithinTolerance&) {
            return std::nullopt;
        }
    } else {
        auto basis = nullspace(relations);
        if (basis.empty()) return std::nullopt;
        // integer-scale the null space columns for denominator hygiene
        for (auto& col : basis) {
            mpz_class l = 1;
            for (const auto& v : col)
                mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), v.get_den().get_mpz_t());
            for (auto& v : col) v *= Rational(l);
        }
        Eigen::MatrixXd nmat(template_ids.size(), basis.size());
        double nmax = 0;
        for (std::size_t c = 0; c < basis.size(); ++c)
            for (std::size_t r = 0; r < template_ids.size(); ++r) {
                nmat(r, c) = to_double(basis[c][r]);
                nmax = std::max(nmax, std::fabs(nmat(r, c)));
            }
        Eigen::VectorXd z =
            nmat.completeOrthogonalDecomposition().solve(vstar);
        std::vector<double> zv(z.data(), z.data() + z.size());
        try {
            auto r = diophantine_recover(
                zv, att.denom_bound,
                att.tolerance / std::max(1.0, nmax * std::sqrt(double(basis.size()))));
            for (std::size_t c = 0; c < basis.size(); ++c)
                for (std::size_t k = 0; k < recovered.size(); ++k)
                    recovered[k] += basis[c][k] * r.values[c];
        } catch (const NoRationalWithinTolerance&) {
            return std::nullopt;
        }
    }

    // contract post-checks: per-location common denominator and tolerance
    const Rational tau = rational_from_double(att.tolerance);
    TemplateRecovery out;
    for (const auto& [loc, ids] : st.template_coeffs) {
        Poly phi(sys.variables);
        mpz_class common = 1;
        for (std::size_t a = 0; a < ids.size(); ++a) {
            const Rational& c = recovered[col_of.at(ids[a])];
            if (abs(c - rational_from_double(sol.scalars[ids[a]])) > tau)
                return std::nullopt;
            mpz_lcm(common.get_mpz_t(), common.get_mpz_t(),
                    c.get_den().get_mpz_t());
            if (c != 0) phi.add_term(st.template_monomials[a], c);
        }
        if (common > att.denom_bound) return std::nullopt;
        out.common_denominators[loc] = Rational(common);
        out.invariants[loc] = std::move(phi);
    }
    return out;
}

inline std::optional<RationalMatrix> recover_fixed_block(
    const Eigen::MatrixXd& m, const RecoverySettings& rs) {
    try {
        return round_diagonal_block(m, rs);
    } catch (const NotDiagonallyDominant&) {
    }
    for (double shift : {0.0, 1e-9, 1e-6, 1e-3}) {
        Eigen::MatrixXd cand =
            m + shift * Eigen::MatrixXd::Identity(m.rows(), m.cols());
        RationalMatrix r = recover_detail::recover_entrywise(cand, rs);
        if (exact_psd_check(r).psd) return r;
    }
    return std::nullopt;
}

}  // namespace pipeline_detail

// One full recovery attempt at fixed (D, tau); returns a certificate for the
// (scaled) system it was given, or nothing.
inline std::optional<Certificate> attempt_recovery(
    const HybridSystem& sys, const Stage1& st, const NumericSolution& sol,
    const pipeline_detail::AttemptSettings& att, const RunConfig& cfg,
    const std::string& system_hash) {
    using namespace pipeline_detail;
    RecoverySettings rs = cfg.recovery;
    rs.denom_bound = att.denom_bound;
    rs.tolerance = att.tolerance;

    auto templ = recover_template(sys, st, sol, att, cfg);
    if (!templ) {
        logmsg(cfg, 2, "recovery: no admissible rational template at D=" +
                           att.denom_bound.get_str());
        return std::nullopt;
    }

    Certificate cert;
    cert.mode = st.mode;
    cert.system_hash = system_hash;
    cert.variables = sys.variables;
    cert.invariants = templ->invariants;

    for (std::size_t iid = 0; iid < st.plan.size(); ++iid) {
        const IdentitySpec& spec = st.plan[iid];
        IdentityCert idc;
        idc.kind = spec.kind;
        idc.location = spec.location;
        idc.collapsed = spec.collapsed;
        if (spec.kind == IdentityKind::Jump) {
            idc.transition = spec.transition;
            idc.from = sys.transitions[spec.transition].from;
            idc.to = sys.transitions[spec.transition].to;
        }

        // margins round down so the slack moves into the free SOS block
        Rational margin(0);
        if (spec.has_margin) {
            double est = sol.margins.at(iid);
            margin = best_lower_rational(est, att.denom_bound);
            if (margin <= 0 ||
                abs(margin - rational_from_double(est)) >
                    rational_from_double(att.tolerance)) {
                logmsg(cfg, 2, "recovery: margin of " + spec.name +
                                   " has no admissible rational");
                return std::nullopt;
            }
            idc.margin = margin;
        }

        // fixed multiplier blocks (slots >= 1)
        std::vector<RationalMatrix> fixed;
        for (std::size_t s = 1; s < st.identity_blocks[iid].size(); ++s) {
            const auto& bidx = st.identity_blocks[iid][s];
            auto rec = recover_fixed_block(sol.gram[bidx], rs);
            if (!rec) {
                logmsg(cfg, 2, "recovery: multiplier block " +
                                   st.prob.blocks[bidx].id + " resisted rounding");
                return std::nullopt;
            }
            fixed.push_back(std::move(*rec));
        }

        Stage2Family fam =
            build_stage2(sys, st, iid, cert.invariants, fixed, margin);
        if (fam.structurally_infeasible) {
            logmsg(cfg, 2, "recovery: " + spec.name + ": " + fam.note);
            return std::nullopt;
        }

        RationalMatrix zero_slot(fam.basis.size());
        bool all_zero = true;
        for (const auto& r : fam.rhs)
            if (r != 0) all_zero = false;
        if (all_zero) {
            // the zero matrix is a valid block
        } else {
            auto [status, raw] = solve_sdp(fam.prob, cfg.solver);
            bool usable = status.kind == SolverStatusKind::Feasible;
            if (!usable && status.kind == SolverStatusKind::MaxIters &&
                !raw.blocks.empty())
                usable = equality_residual(fam.prob, raw.blocks, raw.scalars) <=
                         1e-6;
            if (!usable) {
                logmsg(cfg, 2, "recovery: stage-2 solve for " + spec.name +
                                   " returned " + to_string(status.kind));
                return std::nullopt;
            }
            Eigen::MatrixXd m = raw.blocks[0];
            m += raw.scalars[0] *
                 Eigen::MatrixXd::Identity(m.rows(), m.cols());
            GnResult gn;
            try {
                gn = gauss_newton_refine(fam, m, rs);
            } catch (const StalledRefinement&) {
                logmsg(cfg, 2, "recovery: refinement stalled for " + spec.name);
                return std::nullopt;
            }
            if (gn.residual_norm > 1e-8) {
                logmsg(cfg, 2, "recovery: refinement for " + spec.name +
                                   " plateaued at " +
                                   std::to_string(gn.residual_norm));
                return std::nullopt;
            }
            try {
                zero_slot = project_to_rational_psd(gn.block, fam, rs);
            } catch (const RecoveryError& e) {
                logmsg(cfg, 2, "recovery: " + spec.name + ": " + e.what());
                return std::nullopt;
            }
        }

        idc.slots.push_back(GramSlot{fam.basis, std::move(zero_slot)});
        for (std::size_t s = 1; s < st.identity_blocks[iid].size(); ++s) {
            const auto& block = st.prob.blocks[st.identity_blocks[iid][s]];
            idc.slots.push_back(GramSlot{block.basis, std::move(fixed[s - 1])});
        }
        cert.identities.push_back(std::move(idc));
    }
    return cert;
}

// Runs the full generation algorithm: assemble, solve, recover rationals,
// re-verify exactly in process. Never trusts its own arithmetic: only a
// certificate accepted by the exact checker is reported as success.
inline GenerateResult generate_invariants(const HybridSystem& sys,
                                          const RunConfig& cfg,
                                          const std::string& system_text = "") {
    using namespace pipeline_detail;
    GenerateResult res;
    const std::string hash = system_text.empty() ? "-" : hash_hex(system_text);

    auto scales = derive_scales(sys);
    bool nontrivial_scale = false;
    for (const auto& s : scales)
        if (s != 1) nontrivial_scale = true;
    HybridSystem sys_s = nontrivial_scale ? scale_system(sys, scales) : sys;
    if (nontrivial_scale && cfg.log && cfg.verbosity >= 2) {
        std::string msg = "normalized variable scales:";
        for (std::size_t i = 0; i < scales.size(); ++i)
            msg += " " + sys.variables[i] + "=" + to_string(scales[i]);
        logmsg(cfg, 2, msg);
    }

    int dlo = cfg.sweep ? cfg.sweep->first : cfg.d;
    int dhi = cfg.sweep ? cfg.sweep->second : cfg.d;
    bool numeric_found = false;

    for (int d = dlo; d <= dhi; ++d) {
        int e = cfg.e.value_or(default_half_degree(sys, d));
        logmsg(cfg, 1, "degree " + std::to_string(d) + ": assembling (2e = " +
                           std::to_string(2 * e) + ", mode " +
                           to_string(cfg.mode) + ")");
        Rational floor = cfg.eps_min < 1 ? Rational(1) : cfg.eps_min;
        Stage1 st = build_stage1(sys_s, d, e, cfg.mode, floor);
        auto [status, raw] = solve_sdp(st.prob, cfg.solver);
        bool usable = status.kind == SolverStatusKind::Feasible;
        NumericSolution sol;
        if (usable || status.kind == SolverStatusKind::MaxIters) {
            if (!raw.blocks.empty()) {
                sol = extract_solution(st, raw);
                usable = sol.reconstruction_residual <= 1e-6;
            } else {
                usable = false;
            }
        }
        if (!usable) {
            logmsg(cfg, 1, "degree " + std::to_string(d) +
                               ": no polynomial invariant with degree <= " +
                               std::to_string(d) + " (stage 1 " +
                               to_string(status.kind) + ")");
            continue;
        }
        numeric_found = true;
        logmsg(cfg, 1, "degree " + std::to_string(d) + ": numeric solution (" +
                           std::to_string(status.iterations) +
                           " iterations, residual " +
                           std::to_string(sol.reconstruction_residual) + ")");

        // recovery ladder: user (D, tau) first, then finer tolerances, then
        // one denominator-bound escalation
        std::vector<AttemptSettings> ladder;
        for (mpz_class D : {cfg.denom_bound, cfg.denom_bound * 10})
            for (double t :
                 {cfg.tolerance, cfg.tolerance / 10, cfg.tolerance / 100})
                ladder.push_back({D, t});
        for (const auto& att : ladder) {
            auto cert_s =
                attempt_recovery(sys_s, st, sol, att, cfg, hash);
            if (!cert_s) continue;
            Certificate cert =
                nontrivial_scale ? unscale_certificate(*cert_s, scales) : *cert_s;
            cert.system_hash = hash;
            auto report = verify(sys, cert, system_text);
            if (report.certified) {
                res.exit_code = 0;
                res.certificate = cert;
                res.certified_degree = d;
                res.message = "certified at degree " + std::to_string(d);
                logmsg(cfg, 1, res.message + " (D = " + att.denom_bound.get_str() +
                                   ")");
                return res;
            }
            logmsg(cfg, 1, "degree " + std::to_string(d) +
                               ": exact checker rejected a candidate (" +
                               report.reason + "); retrying");
        }
        logmsg(cfg, 1, "degree " + std::to_string(d) +
                           ": numeric solution found, exact recovery failed");
    }

    if (numeric_found) {
        res.exit_code = 2;
        res.message =
            "a numeric invariant exists but exact rational recovery failed";
    } else {
        res.exit_code = 1;
        res.message = "no polynomial invariant with degree <= " +
                      std::to_string(dhi) + " was found";
    }
    return res;
}

}  // namespace invforge
