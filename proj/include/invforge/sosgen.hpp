#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include "invforge/identities.hpp"
#include "invforge/rational_linalg.hpp"

namespace invforge {

struct GramBlockDesc {
    std::string id;
    std::size_t identity = 0;
    std::size_t slot = 0;  // 0 = free SOS, slot k>0 multiplies constraint k-1
    std::vector<Monomial> basis;
    bool in_objective = true;
    std::size_t size() const { return basis.size(); }
};

struct ScalarVar {
    std::string id;
    std::optional<Rational> lower_bound;
    double objective = 0.0;
};

struct GramTerm {
    std::size_t block, i, j;  // i <= j; contributes coef * X_ij
    Rational coef;
};
struct ScalarTerm {
    std::size_t scalar;
    Rational coef;
};
struct Equality {
    std::vector<GramTerm> gram_terms;
    std::vector<ScalarTerm> scalar_terms;
    Rational rhs;
    std::string tag;
};

// Block list plus linear equality constraints from coefficient matching.
struct SdpProblem {
    std::vector<GramBlockDesc> blocks;
    std::vector<ScalarVar> scalars;
    std::vector<Equality> equalities;
};

inline std::string dump_problem(const SdpProblem& p) {
    std::ostringstream os;
    for (const auto& b : p.blocks)
        os << "block " << b.id << " size " << b.size() << "\n";
    for (std::size_t k = 0; k < p.equalities.size(); ++k) {
        const auto& e = p.equalities[k];
        os << "eq " << k << ":";
        bool first = true;
        for (const auto& t : e.gram_terms) {
            os << (first ? " " : " + ") << to_string(t.coef) << "*("
               << p.blocks[t.block].id << "," << t.i << "," << t.j << ")";
            first = false;
        }
        for (const auto& t : e.scalar_terms) {
            os << (first ? " " : " + ") << to_string(t.coef) << "*"
               << p.scalars[t.scalar].id;
            first = false;
        }
        if (first) os << " 0";
        os << " = " << to_string(e.rhs) << "  # " << e.tag << "\n";
    }
    return os.str();
}

// quadratic-form expansion: sum_{i<=j} (2 - [i==j]) G_ij * x^(m_i+m_j)
inline Poly gram_polynomial(const std::vector<Monomial>& basis,
                            const RationalMatrix& g,
                            const std::vector<std::string>& vars) {
    Poly p(vars);
    for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = i; j < basis.size(); ++j) {
            Rational c = g.at(i, j);
            if (i != j) c *= 2;
            if (c != 0) p.add_term(basis[i] * basis[j], c);
        }
    return p;
}

namespace detail {

// per row monomial, the (i, j, coef) pattern of <A, X> for basis^T X basis * c
struct RowPattern {
    std::map<Monomial, std::vector<std::tuple<std::size_t, std::size_t, Rational>>,
             GrlexLess>
        rows;
};

inline RowPattern gram_row_pattern(const std::vector<Monomial>& basis,
                                   const Poly& constraint) {
    RowPattern pat;
    for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = i; j < basis.size(); ++j) {
            Monomial mij = basis[i] * basis[j];
            Rational mult = (i == j) ? Rational(1) : Rational(2);
            for (const auto& [cm, cc] : constraint.terms())
                pat.rows[mij * cm].emplace_back(i, j, mult * cc);
        }
    return pat;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stage 1: templates plus the full feasibility problem
// ---------------------------------------------------------------------------

struct Stage1 {
    SdpProblem prob;
    std::vector<IdentitySpec> plan;
    Mode mode = Mode::PerLocation;
    int d = 0, e = 0;
    std::vector<Monomial> template_monomials;
    std::map<std::string, std::vector<std::size_t>> template_coeffs;  // location -> scalar ids
    std::vector<std::vector<std::size_t>> identity_blocks;  // [identity][slot]
    std::vector<std::optional<std::size_t>> identity_margin;
    std::vector<std::vector<Monomial>> identity_rows;
};

namespace detail {

// linear form of the identity's left-hand side over the template scalars:
// list of (scalar id, shape polynomial over the identity's variables)
inline std::vector<std::pair<std::size_t, Poly>> target_linear_form(
    const HybridSystem& sys, const IdentitySpec& spec, const Stage1& st) {
    std::vector<std::pair<std::size_t, Poly>> out;
    const std::size_t n = sys.variables.size();
    auto coeffs_of = [&](const std::string& loc) -> const std::vector<std::size_t>& {
        return st.template_coeffs.at(loc);
    };
    auto mono_poly = [&](const Monomial& m, const std::vector<std::string>& vars,
                         bool primed) {
        Poly p(vars);
        Monomial mm(vars.size());
        for (std::size_t i = 0; i < n; ++i)
            mm.exponents[primed ? n + i : i] = m.exponents[i];
        p.add_term(mm, Rational(1));
        return p;
    };
    switch (spec.kind) {
        case IdentityKind::Initial: {
            const auto& ids = coeffs_of(sys.initial_location);
            for (std::size_t a = 0; a < st.template_monomials.size(); ++a)
                out.emplace_back(ids[a],
                                 mono_poly(st.template_monomials[a], spec.vars, false));
            break;
        }
        case IdentityKind::Jump: {
            const Transition& t = sys.transitions.at(spec.transition);
            const auto& ids = coeffs_of(t.to);
            for (std::size_t a = 0; a < st.template_monomials.size(); ++a)
                out.emplace_back(
                    ids[a],
                    mono_poly(st.template_monomials[a], spec.vars, !spec.collapsed));
            break;
        }
        case IdentityKind::Flow: {
            const Location& l = sys.location(spec.location);
            const auto& ids = coeffs_of(spec.location);
            for (std::size_t a = 0; a < st.template_monomials.size(); ++a) {
                Poly xa(sys.variables);
                xa.add_term(st.template_monomials[a], Rational(1));
                out.emplace_back(ids[a], lie_derivative(xa, l.field));
            }
            break;
        }
        case IdentityKind::Unsafe: {
            const auto& ids = coeffs_of(spec.location);
            for (std::size_t a = 0; a < st.template_monomials.size(); ++a) {
                Poly xa(sys.variables);
                xa.add_term(st.template_monomials[a], Rational(-1));
                out.emplace_back(ids[a], xa);
            }
            break;
        }
    }
    return out;
}

}  // namespace detail

// Assembles the stage-1 SDP: one template per location (one shared template in
// inductive mode), one Gram block per identity slot, one equality per matched
// monomial, margins bounded below by eps_min, and the sum of Gram traces as
// the dummy objective.
inline Stage1 build_stage1(const HybridSystem& sys, int d, int e, Mode mode,
                           const Rational& eps_min = Rational(1, 1000)) {
    if (d < 0) throw std::invalid_argument("build_stage1: d must be >= 0");
    if (e < 0) throw std::invalid_argument("build_stage1: e must be >= 0");
    Stage1 st;
    st.plan = plan_identities(sys, mode);
    st.mode = mode;
    st.d = d;
    st.e = e;
    const std::size_t n = sys.variables.size();
    st.template_monomials = enumerate_monomials(n, d);

    // template coefficients
    if (mode == Mode::Inductive) {
        std::vector<std::size_t> ids;
        for (std::size_t a = 0; a < st.template_monomials.size(); ++a) {
            ids.push_back(st.prob.scalars.size());
            st.prob.scalars.push_back(ScalarVar{
                "c[" + monomial_to_string(st.template_monomials[a], sys.variables) +
                    "]",
                std::nullopt, 0.0});
        }
        for (const auto& l : sys.locations) st.template_coeffs[l.id] = ids;
    } else {
        for (const auto& l : sys.locations) {
            std::vector<std::size_t> ids;
            for (std::size_t a = 0; a < st.template_monomials.size(); ++a) {
                ids.push_back(st.prob.scalars.size());
                st.prob.scalars.push_back(ScalarVar{
                    "c[" + l.id + "," +
                        monomial_to_string(st.template_monomials[a], sys.variables) +
                        "]",
                    std::nullopt, 0.0});
            }
            st.template_coeffs[l.id] = ids;
        }
    }

    st.identity_blocks.resize(st.plan.size());
    st.identity_margin.resize(st.plan.size());
    st.identity_rows.resize(st.plan.size());

    for (std::size_t iid = 0; iid < st.plan.size(); ++iid) {
        const IdentitySpec& spec = st.plan[iid];
        int delta = std::max(identity_target_degree(sys, spec, d), 2 * e);
        for (const auto& c : spec.constraints) delta = std::max(delta, c.degree());

        // per-slot SOS half-degrees within the identity degree
        std::vector<int> half(spec.constraints.size() + 1);
        half[0] = std::min(e, delta / 2);
        for (std::size_t j = 0; j < spec.constraints.size(); ++j)
            half[j + 1] = std::min(e, (delta - spec.constraints[j].degree()) / 2);

        for (std::size_t s = 0; s < half.size(); ++s) {
            GramBlockDesc b;
            b.identity = iid;
            b.slot = s;
            b.id = spec.name + " slot " + std::to_string(s);
            b.basis = enumerate_monomials(spec.vars.size(), half[s]);
            b.in_objective = true;
            st.identity_blocks[iid].push_back(st.prob.blocks.size());
            st.prob.blocks.push_back(std::move(b));
        }
        if (spec.has_margin) {
            st.identity_margin[iid] = st.prob.scalars.size();
            st.prob.scalars.push_back(
                ScalarVar{"eps[" + spec.name + "]", eps_min, 0.0});
        }

        // one equality per monomial of degree <= delta
        auto rows = enumerate_monomials(spec.vars.size(), delta);
        std::map<Monomial, std::size_t, GrlexLess> row_of;
        std::vector<Equality> eqs(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            row_of[rows[r]] = r;
            eqs[r].tag = spec.name + " : " + monomial_to_string(rows[r], spec.vars);
            eqs[r].rhs = 0;
        }

        Poly one(spec.vars, Rational(1));
        for (std::size_t s = 0; s < half.size(); ++s) {
            const auto& block = st.prob.blocks[st.identity_blocks[iid][s]];
            const Poly& c = s == 0 ? one : spec.constraints[s - 1];
            auto pat = detail::gram_row_pattern(block.basis, c);
            for (auto& [mono, terms] : pat.rows) {
                auto it = row_of.find(mono);
                if (it == row_of.end())
                    throw std::logic_error("monomial outside identity degree");
                for (auto& [i, j, coef] : terms)
                    eqs[it->second].gram_terms.push_back(
                        GramTerm{st.identity_blocks[iid][s], i, j, coef});
            }
        }
        if (st.identity_margin[iid]) {
            Monomial cst(spec.vars.size());
            eqs[row_of[cst]].scalar_terms.push_back(
                ScalarTerm{*st.identity_margin[iid], Rational(1)});
        }
        for (auto& [sid, shape] : detail::target_linear_form(sys, spec, st)) {
            for (const auto& [m, c] : shape.terms()) {
                auto it = row_of.find(m);
                if (it == row_of.end())
                    throw std::logic_error("template monomial outside identity degree");
                eqs[it->second].scalar_terms.push_back(ScalarTerm{sid, -c});
            }
        }

        // merge duplicate gram terms, drop empty rows
        for (auto& eq : eqs) {
            std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Rational>
                acc;
            for (const auto& t : eq.gram_terms) acc[{t.block, t.i, t.j}] += t.coef;
            eq.gram_terms.clear();
            for (const auto& [key, coef] : acc)
                if (coef != 0)
                    eq.gram_terms.push_back(GramTerm{std::get<0>(key), std::get<1>(key),
                                                     std::get<2>(key), coef});
            std::map<std::size_t, Rational> sacc;
            for (const auto& t : eq.scalar_terms) sacc[t.scalar] += t.coef;
            eq.scalar_terms.clear();
            for (const auto& [sid, coef] : sacc)
                if (coef != 0) eq.scalar_terms.push_back(ScalarTerm{sid, coef});
        }
        st.identity_rows[iid] = rows;
        for (auto& eq : eqs) {
            if (eq.gram_terms.empty() && eq.scalar_terms.empty() && eq.rhs == 0)
                continue;
            st.prob.equalities.push_back(std::move(eq));
        }
    }
    return st;
}

// ---------------------------------------------------------------------------
// solution extraction
// ---------------------------------------------------------------------------

struct RawSolution {
    std::vector<Eigen::MatrixXd> blocks;
    std::vector<double> scalars;
    Eigen::VectorXd dual;  // multipliers for the kept equalities
};

struct NumericSolution {
    std::vector<Eigen::MatrixXd> gram;
    std::vector<double> scalars;
    std::map<std::string, Eigen::VectorXd> template_values;
    std::map<std::size_t, double> margins;  // identity index -> margin
    double reconstruction_residual = 0.0;
};

inline double equality_residual(const SdpProblem& p,
                                const std::vector<Eigen::MatrixXd>& blocks,
                                const std::vector<double>& scalars) {
    double worst = 0.0;
    for (const auto& eq : p.equalities) {
        double acc = -to_double(eq.rhs);
        for (const auto& t : eq.gram_terms)
            acc += to_double(t.coef) * blocks[t.block](t.i, t.j);
        for (const auto& t : eq.scalar_terms)
            acc += to_double(t.coef) * scalars[t.scalar];
        worst = std::max(worst, std::fabs(acc));
    }
    return worst;
}

inline NumericSolution extract_solution(const Stage1& st, const RawSolution& raw) {
    NumericSolution out;
    out.gram.reserve(raw.blocks.size());
    for (const auto& b : raw.blocks) out.gram.push_back(0.5 * (b + b.transpose()));
    out.scalars = raw.scalars;
    for (const auto& [loc, ids] : st.template_coeffs) {
        Eigen::VectorXd v(ids.size());
        for (std::size_t a = 0; a < ids.size(); ++a) v[a] = raw.scalars[ids[a]];
        out.template_values[loc] = v;
    }
    for (std::size_t iid = 0; iid < st.plan.size(); ++iid)
        if (st.identity_margin[iid])
            out.margins[iid] = raw.scalars[*st.identity_margin[iid]];
    out.reconstruction_residual = equality_residual(st.prob, out.gram, out.scalars);
    return out;
}

// ---------------------------------------------------------------------------
// stage 2: one family per identity, the zero-slot block is the only unknown
// ---------------------------------------------------------------------------

struct Stage2Family {
    SdpProblem prob;  // block 0 plus the interior-margin scalar "t"
    std::size_t identity = 0;
    std::vector<Monomial> basis;
    std::vector<Monomial> rows;
    RatMat a;             // rows x sym-entries of the block
    RatVec rhs;           // exact residual coefficients
    RatVec weights;       // Frobenius weights per sym entry (1 diag, 2 offdiag)
    Poly residual;        // the exact residual polynomial
    bool structurally_infeasible = false;
    std::string note;
};

// Exact residual of identity `iid` once the template, the margins and the
// non-zero-slot multipliers are fixed rationals.
inline Poly stage2_residual(const HybridSystem& sys, const Stage1& st,
                            std::size_t iid,
                            const std::map<std::string, Poly>& invariants,
                            const std::vector<RationalMatrix>& fixed_slots,
                            const Rational& margin) {
    const IdentitySpec& spec = st.plan[iid];
    Poly r = identity_target(sys, spec, invariants);
    for (std::size_t s = 1; s < st.identity_blocks[iid].size(); ++s) {
        const auto& block = st.prob.blocks[st.identity_blocks[iid][s]];
        r = r - gram_polynomial(block.basis, fixed_slots.at(s - 1), spec.vars) *
                    spec.constraints[s - 1];
    }
    if (spec.has_margin) r = r - Poly(spec.vars, margin);
    return r;
}

inline Stage2Family build_stage2(const HybridSystem& sys, const Stage1& st,
                                 std::size_t iid,
                                 const std::map<std::string, Poly>& invariants,
                                 const std::vector<RationalMatrix>& fixed_slots,
                                 const Rational& margin) {
    const IdentitySpec& spec = st.plan[iid];
    Stage2Family fam;
    fam.identity = iid;
    fam.basis = st.prob.blocks[st.identity_blocks[iid][0]].basis;
    fam.residual = stage2_residual(sys, st, iid, invariants, fixed_slots, margin);
    fam.rows = st.identity_rows[iid];

    const std::size_t s = fam.basis.size();
    const std::size_t nsym = s * (s + 1) / 2;
    auto sym_index = [&](std::size_t i, std::size_t j) {
        // i <= j; row-major upper triangle
        return i * s - i * (i - 1) / 2 + (j - i);
    };
    fam.weights.assign(nsym, Rational(1));
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j) fam.weights[sym_index(i, j)] = 2;

    GramBlockDesc block;
    block.id = spec.name + " slot 0";
    block.identity = iid;
    block.slot = 0;
    block.basis = fam.basis;
    block.in_objective = false;
    fam.prob.blocks.push_back(block);
    fam.prob.scalars.push_back(ScalarVar{"t", std::nullopt, -1.0});

    Poly one(spec.vars, Rational(1));
    auto pat = detail::gram_row_pattern(fam.basis, one);
    std::map<Monomial, std::size_t, GrlexLess> row_of;
    for (std::size_t r = 0; r < fam.rows.size(); ++r) row_of[fam.rows[r]] = r;

    fam.a.assign(fam.rows.size(), RatVec(nsym, Rational(0)));
    fam.rhs.assign(fam.rows.size(), Rational(0));
    for (std::size_t r = 0; r < fam.rows.size(); ++r)
        fam.rhs[r] = fam.residual.coefficient(fam.rows[r]);
    for (const auto& [m, c] : fam.residual.terms())
        if (row_of.find(m) == row_of.end())
            throw std::logic_error("stage-2 residual outside the identity rows");

    for (auto& [mono, terms] : pat.rows) {
        std::size_t r = row_of.at(mono);
        for (auto& [i, j, coef] : terms) fam.a[r][sym_index(i, j)] += coef;
    }

    for (std::size_t r = 0; r < fam.rows.size(); ++r) {
        Equality eq;
        eq.tag = spec.name + " : " + monomial_to_string(fam.rows[r], spec.vars);
        eq.rhs = fam.rhs[r];
        bool any = false;
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = i; j < s; ++j) {
                const Rational& coef = fam.a[r][sym_index(i, j)];
                if (coef == 0) continue;
                eq.gram_terms.push_back(GramTerm{0, i, j, coef});
                any = true;
            }
        // identity shift: X + t*I must reproduce the row as well
        Rational tcoef(0);
        for (std::size_t i = 0; i < s; ++i)
            if (fam.basis[i] * fam.basis[i] == fam.rows[r]) tcoef += 1;
        if (tcoef != 0) {
            eq.scalar_terms.push_back(ScalarTerm{0, tcoef});
            any = true;
        }
        if (!any) {
            if (eq.rhs != 0) {
                fam.structurally_infeasible = true;
                fam.note = "residual has the uncovered monomial " +
                           monomial_to_string(fam.rows[r], spec.vars) +
                           " with coefficient " + to_string(eq.rhs);
            }
            continue;
        }
        fam.prob.equalities.push_back(std::move(eq));
    }
    return fam;
}

}  // namespace invforge
