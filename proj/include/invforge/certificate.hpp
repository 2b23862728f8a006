#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invforge/identities.hpp"
#include "invforge/rational_linalg.hpp"

namespace invforge {

struct CertificateError : std::runtime_error {
    int line;
    CertificateError(const std::string& msg, int line_)
        : std::runtime_error("certificate line " + std::to_string(line_) + ": " +
                             msg),
          line(line_) {}
};

struct GramSlot {
    std::vector<Monomial> basis;  // over the identity's variable list
    RationalMatrix matrix;
    bool operator==(const GramSlot&) const = default;
};

struct IdentityCert {
    IdentityKind kind = IdentityKind::Initial;
    std::string location;                                    // init/flow/unsafe
    std::size_t transition = static_cast<std::size_t>(-1);   // jump
    std::string from, to;                                    // jump, for text
    bool collapsed = false;                                  // jump
    std::optional<Rational> margin;
    std::vector<GramSlot> slots;
    bool operator==(const IdentityCert&) const = default;
};

// The exactly checkable artifact: rational invariants, rational multiplier
// Gram matrices with their bases, and rational margins.
struct Certificate {
    int version = 1;
    Mode mode = Mode::PerLocation;
    std::string system_hash = "-";
    std::vector<std::string> variables;
    std::map<std::string, Poly> invariants;
    std::vector<IdentityCert> identities;
    bool operator==(const Certificate&) const = default;
};

inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(const std::string& text) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << fnv1a64(text);
    return os.str();
}

// ---------------------------------------------------------------------------
// versioned text serialization; every number is p/q
// ---------------------------------------------------------------------------

inline std::string serialize_certificate(const Certificate& cert) {
    std::ostringstream os;
    os << "invcert " << cert.version << "\n";
    os << "hash " << cert.system_hash << "\n";
    os << "mode " << to_string(cert.mode) << "\n";
    os << "vars";
    for (const auto& v : cert.variables) os << " " << v;
    os << "\n";
    for (const auto& [loc, phi] : cert.invariants)
        os << "invariant " << loc << " = " << to_string(phi) << "\n";
    for (const auto& id : cert.identities) {
        switch (id.kind) {
            case IdentityKind::Initial:
                os << "identity init " << id.location << "\n";
                break;
            case IdentityKind::Jump:
                os << "identity jump " << id.transition << " " << id.from
                   << " -> " << id.to << " "
                   << (id.collapsed ? "collapsed" : "joint") << "\n";
                break;
            case IdentityKind::Flow:
                os << "identity flow " << id.location << "\n";
                break;
            case IdentityKind::Unsafe:
                os << "identity unsafe " << id.location << "\n";
                break;
        }
        if (id.margin) os << "  margin " << to_string(*id.margin) << "\n";
        std::vector<std::string> vars = cert.variables;
        if (id.kind == IdentityKind::Jump && !id.collapsed)
            for (const auto& v : cert.variables) vars.push_back(v + "'");
        for (std::size_t s = 0; s < id.slots.size(); ++s) {
            const GramSlot& slot = id.slots[s];
            os << "  slot " << s << "\n";
            os << "    basis ";
            for (std::size_t i = 0; i < slot.basis.size(); ++i) {
                if (i) os << " ; ";
                os << monomial_to_string(slot.basis[i], vars);
            }
            os << "\n";
            for (std::size_t i = 0; i < slot.matrix.n; ++i) {
                os << "    row";
                for (std::size_t j = 0; j < slot.matrix.n; ++j)
                    os << " " << to_string(slot.matrix.at(i, j));
                os << "\n";
            }
        }
    }
    os << "end\n";
    return os.str();
}

inline Certificate parse_certificate(const std::string& text) {
    Certificate cert;
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    IdentityCert* cur_id = nullptr;
    GramSlot* cur_slot = nullptr;
    std::size_t row_fill = 0;
    bool saw_header = false, saw_end = false;
    std::vector<std::string> jumpvars;

    auto idvars = [&](const IdentityCert& id) -> const std::vector<std::string>& {
        return (id.kind == IdentityKind::Jump && !id.collapsed) ? jumpvars
                                                                : cert.variables;
    };

    while (std::getline(is, raw)) {
        ++line;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string s = detail::strip(raw);
        if (s.empty()) continue;
        if (saw_end) throw CertificateError("content after end", line);
        std::istringstream ls(s);
        std::string kw;
        ls >> kw;

        if (!saw_header) {
            if (kw != "invcert")
                throw CertificateError("expected 'invcert <version>'", line);
            int v = -1;
            ls >> v;
            if (v != 1) throw CertificateError("unsupported version", line);
            cert.version = v;
            saw_header = true;
            continue;
        }
        if (kw == "hash") {
            ls >> cert.system_hash;
        } else if (kw == "mode") {
            std::string m;
            ls >> m;
            if (m == "inductive") cert.mode = Mode::Inductive;
            else if (m == "per-location") cert.mode = Mode::PerLocation;
            else throw CertificateError("unknown mode " + m, line);
        } else if (kw == "vars") {
            std::string v;
            while (ls >> v) cert.variables.push_back(v);
            if (cert.variables.empty())
                throw CertificateError("empty variable list", line);
            jumpvars = cert.variables;
            for (const auto& x : cert.variables) jumpvars.push_back(x + "'");
        } else if (kw == "invariant") {
            std::string loc, eq;
            ls >> loc >> eq;
            if (eq != "=") throw CertificateError("expected '='", line);
            std::string rest;
            std::getline(ls, rest);
            try {
                cert.invariants[loc] = parse_polynomial(rest, cert.variables);
            } catch (const ParseError& e) {
                throw CertificateError(e.what(), line);
            }
        } else if (kw == "identity") {
            std::string kind;
            ls >> kind;
            IdentityCert id;
            if (kind == "init") {
                id.kind = IdentityKind::Initial;
                ls >> id.location;
            } else if (kind == "flow") {
                id.kind = IdentityKind::Flow;
                ls >> id.location;
            } else if (kind == "unsafe") {
                id.kind = IdentityKind::Unsafe;
                ls >> id.location;
            } else if (kind == "jump") {
                id.kind = IdentityKind::Jump;
                std::string arrow, mode;
                ls >> id.transition >> id.from >> arrow >> id.to >> mode;
                if (arrow != "->")
                    throw CertificateError("expected 'jump <k> FROM -> TO'", line);
                if (mode == "collapsed") id.collapsed = true;
                else if (mode == "joint") id.collapsed = false;
                else throw CertificateError("expected 'collapsed' or 'joint'", line);
            } else {
                throw CertificateError("unknown identity kind " + kind, line);
            }
            cert.identities.push_back(std::move(id));
            cur_id = &cert.identities.back();
            cur_slot = nullptr;
        } else if (kw == "margin") {
            if (!cur_id) throw CertificateError("margin outside identity", line);
            std::string v;
            ls >> v;
            try {
                cur_id->margin = rational_from_string(v);
            } catch (const std::exception& e) {
                throw CertificateError(e.what(), line);
            }
        } else if (kw == "slot") {
            if (!cur_id) throw CertificateError("slot outside identity", line);
            std::size_t idx;
            ls >> idx;
            if (idx != cur_id->slots.size())
                throw CertificateError("slots must appear in order", line);
            cur_id->slots.emplace_back();
            cur_slot = &cur_id->slots.back();
            row_fill = 0;
        } else if (kw == "basis") {
            if (!cur_slot) throw CertificateError("basis outside slot", line);
            std::string rest = detail::strip(s.substr(kw.size()));
            const auto& vars = idvars(*cur_id);
            std::size_t start = 0;
            while (start <= rest.size()) {
                std::size_t semi = rest.find(';', start);
                std::string item = detail::strip(rest.substr(
                    start,
                    semi == std::string::npos ? std::string::npos : semi - start));
                if (item.empty())
                    throw CertificateError("empty basis element", line);
                Poly p;
                try {
                    p = parse_polynomial(item, vars);
                } catch (const ParseError& e) {
                    throw CertificateError(e.what(), line);
                }
                if (p.terms().size() != 1 ||
                    p.terms().begin()->second != Rational(1))
                    throw CertificateError(
                        "basis element must be a plain monomial: " + item, line);
                cur_slot->basis.push_back(p.terms().begin()->first);
                if (semi == std::string::npos) break;
                start = semi + 1;
            }
            cur_slot->matrix = RationalMatrix(cur_slot->basis.size());
        } else if (kw == "row") {
            if (!cur_slot || cur_slot->basis.empty())
                throw CertificateError("row before basis", line);
            if (row_fill >= cur_slot->matrix.n)
                throw CertificateError("too many rows", line);
            for (std::size_t j = 0; j < cur_slot->matrix.n; ++j) {
                std::string v;
                if (!(ls >> v))
                    throw CertificateError("row is too short", line);
                try {
                    cur_slot->matrix.at(row_fill, j) = rational_from_string(v);
                } catch (const std::exception& e) {
                    throw CertificateError(e.what(), line);
                }
            }
            std::string extra;
            if (ls >> extra) throw CertificateError("row is too long", line);
            ++row_fill;
        } else if (kw == "end") {
            saw_end = true;
        } else {
            throw CertificateError("unknown keyword " + kw, line);
        }
    }
    if (!saw_header) throw CertificateError("missing invcert header", 0);
    if (!saw_end) throw CertificateError("missing end marker", line);
    for (const auto& id : cert.identities)
        for (const auto& slot : id.slots) {
            if (slot.basis.empty())
                throw CertificateError("slot without basis", 0);
            for (std::size_t i = 0; i < slot.matrix.n; ++i)
                for (std::size_t j = 0; j < i; ++j)
                    if (slot.matrix.at(i, j) != slot.matrix.at(j, i))
                        throw CertificateError("matrix is not symmetric", 0);
        }
    return cert;
}

// exact check that target = sum_i weight_i * h_i^2
inline bool verify_sos_identity(
    const Poly& target,
    const std::vector<std::pair<Rational, Poly>>& squares) {
    Poly acc(target.variables());
    for (const auto& [w, h] : squares) {
        if (w < 0) return false;
        acc = acc + h * h * w;
    }
    return acc == target;
}

}  // namespace invforge
