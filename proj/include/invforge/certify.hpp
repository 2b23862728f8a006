#pragma once

#include "invforge/certificate.hpp"
#include "invforge/sosgen.hpp"

namespace invforge {

struct IdentityStatus {
    std::string name;
    bool zero_residual = false;
    Poly residual;  // exact residual polynomial when nonzero
};

struct MatrixStatus {
    std::string name;
    bool psd = false;
    RatVec witness;  // z with z^T M z < 0 when not psd
};

struct VerificationReport {
    std::vector<IdentityStatus> identities;
    std::vector<MatrixStatus> matrices;
    std::vector<std::pair<std::string, Rational>> margins;
    std::vector<std::string> structural_problems;  // certificate/system mismatch
    std::vector<std::string> warnings;
    bool certified = false;
    std::string reason;

    bool structurally_valid() const { return structural_problems.empty(); }
};

// Exact verification: every identity is recomputed in rational arithmetic
// from the system's own constraint polynomials and the certificate's Gram
// matrices; every Gram matrix is PSD-checked exactly; all margins must be
// strictly positive. Failures land in the report, never in exceptions.
inline VerificationReport verify(const HybridSystem& sys, const Certificate& cert,
                                 const std::string& system_text = "") {
    VerificationReport rep;
    auto fail = [&](const std::string& why) {
        if (rep.reason.empty()) rep.reason = why;
    };

    if (cert.variables != sys.variables) {
        rep.structural_problems.push_back(
            "certificate variable list does not match the system");
        fail("variable mismatch");
        return rep;
    }
    if (!system_text.empty() && cert.system_hash != "-" &&
        cert.system_hash != hash_hex(system_text))
        rep.warnings.push_back(
            "system hash mismatch: the certificate was produced for a "
            "different system text");

    for (const auto& l : sys.locations)
        if (!cert.invariants.count(l.id)) {
            rep.structural_problems.push_back("no invariant for location " +
                                              l.id);
            fail("missing invariant");
        }
    if (!rep.structural_problems.empty()) return rep;

    if (cert.mode == Mode::Inductive) {
        const Poly& first = cert.invariants.begin()->second;
        for (const auto& [loc, phi] : cert.invariants)
            if (phi != first)
                fail("inductive certificate with differing location invariants");
    }

    auto plan = plan_identities(sys, cert.mode);
    if (plan.size() != cert.identities.size()) {
        rep.structural_problems.push_back(
            "certificate has " + std::to_string(cert.identities.size()) +
            " identities, the system needs " + std::to_string(plan.size()));
        fail("identity count mismatch");
        return rep;
    }

    for (std::size_t i = 0; i < plan.size(); ++i) {
        const IdentitySpec& spec = plan[i];
        const IdentityCert& idc = cert.identities[i];
        bool match = idc.kind == spec.kind;
        if (match) switch (spec.kind) {
                case IdentityKind::Initial:
                    match = idc.location == spec.location;
                    break;
                case IdentityKind::Jump:
                    match = idc.transition == spec.transition &&
                            idc.collapsed == spec.collapsed;
                    break;
                case IdentityKind::Flow:
                case IdentityKind::Unsafe:
                    match = idc.location == spec.location;
                    break;
            }
        if (!match) {
            rep.structural_problems.push_back("identity " + std::to_string(i) +
                                              " does not match " + spec.name);
            fail("identity order mismatch");
            return rep;
        }
    }

    for (std::size_t i = 0; i < plan.size(); ++i) {
        const IdentitySpec& spec = plan[i];
        const IdentityCert& idc = cert.identities[i];
        IdentityStatus ist;
        ist.name = spec.name;

        if (idc.slots.size() != spec.constraints.size() + 1) {
            fail(spec.name + ": expected " +
                 std::to_string(spec.constraints.size() + 1) + " multiplier slots, found " +
                 std::to_string(idc.slots.size()));
            ist.residual = identity_target(sys, spec, cert.invariants);
            ist.zero_residual = false;
            rep.identities.push_back(std::move(ist));
            continue;
        }
        if (spec.has_margin) {
            Rational m = idc.margin.value_or(Rational(0));
            rep.margins.emplace_back(spec.name, m);
            if (m <= 0) fail(spec.name + ": margin is not strictly positive");
        } else if (idc.margin) {
            fail(spec.name + ": unexpected margin");
        }

        bool bases_ok = true;
        const std::size_t nvars = spec.vars.size();
        for (std::size_t s = 0; s < idc.slots.size(); ++s) {
            for (const auto& b : idc.slots[s].basis)
                if (b.size() != nvars) {
                    fail(spec.name + ": slot " + std::to_string(s) +
                         " basis lives over the wrong variables");
                    bases_ok = false;
                }
            if (idc.slots[s].basis.size() != idc.slots[s].matrix.n) {
                fail(spec.name + ": slot " + std::to_string(s) +
                     " basis/matrix size mismatch");
                bases_ok = false;
            }
        }
        if (!bases_ok) {
            ist.zero_residual = false;
            ist.residual = identity_target(sys, spec, cert.invariants);
            rep.identities.push_back(std::move(ist));
            continue;
        }

        Poly residual = identity_target(sys, spec, cert.invariants);
        for (std::size_t s = 0; s < idc.slots.size(); ++s) {
            Poly g = gram_polynomial(idc.slots[s].basis, idc.slots[s].matrix,
                                     spec.vars);
            residual = residual - (s == 0 ? g : g * spec.constraints[s - 1]);
        }
        if (spec.has_margin)
            residual = residual - Poly(spec.vars, idc.margin.value_or(Rational(0)));
        ist.zero_residual = residual.is_zero();
        ist.residual = residual;
        if (!ist.zero_residual)
            fail(spec.name + ": identity residual is not the zero polynomial");
        rep.identities.push_back(std::move(ist));

        for (std::size_t s = 0; s < idc.slots.size(); ++s) {
            MatrixStatus ms;
            ms.name = spec.name + " slot " + std::to_string(s);
            auto psd = exact_psd_check(idc.slots[s].matrix);
            ms.psd = psd.psd;
            if (!psd.psd) {
                ms.witness = psd.witness;
                fail(ms.name + ": Gram matrix is not positive semidefinite");
            }
            rep.matrices.push_back(std::move(ms));
        }
    }

    rep.certified = rep.reason.empty();
    return rep;
}

}  // namespace invforge
