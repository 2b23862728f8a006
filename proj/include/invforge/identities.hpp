#pragma once

#include <map>
#include <string>
#include <vector>

#include "invforge/model.hpp"

namespace invforge {

enum class Mode { PerLocation, Inductive };

inline std::string to_string(Mode m) {
    return m == Mode::PerLocation ? "per-location" : "inductive";
}

enum class IdentityKind { Initial, Jump, Flow, Unsafe };

// One polynomial identity of the relaxed invariant conditions. Slot 0 is the
// free sum-of-squares term; slot k+1 multiplies constraints[k].
//
// Jump identities come in two flavours. When every reset constraint mentions
// only next-state variables the identity is formed over a single copy of the
// state variables: the next state is identified with the current one in the
// invariant, the reset and the multipliers. Otherwise the identity lives over
// vars + primed(vars) and the invariant on the left is taken at the primed
// variables.
struct IdentitySpec {
    IdentityKind kind;
    std::string name;
    std::string location;          // Initial: the initial location; Flow/Unsafe
    std::size_t transition = static_cast<std::size_t>(-1);  // Jump
    bool collapsed = false;                                 // Jump
    std::vector<std::string> vars;  // variable list the identity lives over
    std::vector<Poly> constraints;  // over vars, slot k+1 multiplies entry k
    bool has_margin = false;
};

inline std::vector<IdentitySpec> plan_identities(const HybridSystem& sys,
                                                 Mode /*mode*/) {
    // the plan is mode-independent; mode only decides whether every location
    // shares one template polynomial
    std::vector<IdentitySpec> plan;
    const std::size_t n = sys.variables.size();

    {
        IdentitySpec id;
        id.kind = IdentityKind::Initial;
        id.location = sys.initial_location;
        id.name = "init " + sys.initial_location;
        id.vars = sys.variables;
        id.constraints = sys.initial_set.constraints;
        plan.push_back(std::move(id));
    }

    for (std::size_t ti = 0; ti < sys.transitions.size(); ++ti) {
        const Transition& t = sys.transitions[ti];
        IdentitySpec id;
        id.kind = IdentityKind::Jump;
        id.transition = ti;
        id.name = "jump " + std::to_string(ti) + " " + t.from + " -> " + t.to;
        id.collapsed = reset_is_next_state_only(sys, t);
        if (id.collapsed) {
            id.vars = sys.variables;
            for (const auto& g : t.guard.constraints) id.constraints.push_back(g);
            // drop the primed coordinates onto the state variables
            std::vector<std::size_t> where(2 * n);
            for (std::size_t i = 0; i < n; ++i) {
                where[i] = i;
                where[n + i] = i;
            }
            for (const auto& r : t.reset.constraints)
                id.constraints.push_back(r.remap(sys.variables, where));
        } else {
            id.vars = sys.jump_variables();
            std::vector<std::size_t> where(n);
            for (std::size_t i = 0; i < n; ++i) where[i] = i;
            for (const auto& g : t.guard.constraints)
                id.constraints.push_back(g.remap(id.vars, where));
            for (const auto& r : t.reset.constraints) id.constraints.push_back(r);
        }
        plan.push_back(std::move(id));
    }

    for (const auto& l : sys.locations) {
        IdentitySpec id;
        id.kind = IdentityKind::Flow;
        id.location = l.id;
        id.name = "flow " + l.id;
        id.vars = sys.variables;
        id.constraints = l.invariant_set.constraints;
        id.has_margin = true;
        plan.push_back(std::move(id));
    }

    for (const auto& l : sys.locations) {
        if (!l.unsafe_set) continue;
        IdentitySpec id;
        id.kind = IdentityKind::Unsafe;
        id.location = l.id;
        id.name = "unsafe " + l.id;
        id.vars = sys.variables;
        id.constraints = l.unsafe_set->constraints;
        id.has_margin = true;
        plan.push_back(std::move(id));
    }
    return plan;
}

// Left-hand side of an identity for given invariant polynomials (over the
// system variables, one per location; in inductive mode all entries coincide).
inline Poly identity_target(const HybridSystem& sys, const IdentitySpec& id,
                            const std::map<std::string, Poly>& invariants) {
    const std::size_t n = sys.variables.size();
    switch (id.kind) {
        case IdentityKind::Initial:
            return invariants.at(sys.initial_location);
        case IdentityKind::Jump: {
            const Transition& t = sys.transitions.at(id.transition);
            const Poly& phi = invariants.at(t.to);
            if (id.collapsed) return phi;
            std::vector<std::size_t> where(n);
            for (std::size_t i = 0; i < n; ++i) where[i] = n + i;
            return phi.remap(id.vars, where);
        }
        case IdentityKind::Flow:
            return lie_derivative(invariants.at(id.location),
                                  sys.location(id.location).field);
        case IdentityKind::Unsafe:
            return -invariants.at(id.location);
    }
    throw std::logic_error("unreachable");
}

// Upper bound on the target degree for a template of degree d.
inline int identity_target_degree(const HybridSystem& sys,
                                  const IdentitySpec& id, int d) {
    if (id.kind != IdentityKind::Flow) return d;
    int fdeg = 0;
    for (const auto& f : sys.location(id.location).field)
        fdeg = std::max(fdeg, f.degree());
    return d == 0 ? 0 : d - 1 + fdeg;
}

}  // namespace invforge
