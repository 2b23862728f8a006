#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invforge/polynomial.hpp"

namespace invforge {

struct ModelError : std::runtime_error {
    int line;
    ModelError(const std::string& msg, int line_)
        : std::runtime_error("line " + std::to_string(line_) + ": " + msg),
          line(line_) {}
};

// Conjunction of polynomial inequalities, each constraint >= 0.
struct SemialgebraicSet {
    std::vector<Poly> constraints;
    bool operator==(const SemialgebraicSet&) const = default;
};

// Constraints over current and next-state variables; primed names (x1') are
// the next state. Polynomials live over vars + primed(vars).
struct ResetRelation {
    std::vector<Poly> constraints;
    bool operator==(const ResetRelation&) const = default;
};

struct Location {
    std::string id;
    std::vector<Poly> field;  // one component per system variable
    SemialgebraicSet invariant_set;
    std::optional<SemialgebraicSet> unsafe_set;
    bool operator==(const Location&) const = default;
};

struct Transition {
    std::string from, to;
    SemialgebraicSet guard;
    ResetRelation reset;
    bool operator==(const Transition&) const = default;
};

struct HybridSystem {
    std::vector<std::string> variables;
    std::vector<Location> locations;
    std::vector<Transition> transitions;
    std::string initial_location;
    SemialgebraicSet initial_set;
    bool operator==(const HybridSystem&) const = default;

    const Location& location(const std::string& id) const {
        for (const auto& l : locations)
            if (l.id == id) return l;
        throw std::out_of_range("no such location: " + id);
    }
    bool has_location(const std::string& id) const {
        return std::any_of(locations.begin(), locations.end(),
                           [&](const Location& l) { return l.id == id; });
    }
    std::vector<std::string> jump_variables() const {
        std::vector<std::string> v = variables;
        for (const auto& x : variables) v.push_back(x + "'");
        return v;
    }
};

struct Warning {
    std::string message;
};

// ---------------------------------------------------------------------------
// parser for the section-based text format:
//
//   vars x1 x2
//   location l1
//     field x2 ; -x1 + x2
//     invariant (x1+1)*(2-x1) >= 0 ; (x2+1)*(2-x2) >= 0
//     unsafe 0.16 - (x1+1)^2 - (x2+1)^2 >= 0
//   transition l1 -> l2
//     guard (x2-1.6)*(2-x2) >= 0
//     reset 0.01 - (x1'-2.6)^2 - (x2'-2.8)^2 >= 0
//   init l1
//     set 0.25 - (x1-1.5)^2 - x2^2 >= 0
//
// '#' starts a comment; primed names are legal only in reset expressions.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

// parses "expr >= 0 ; expr >= 0 ; ..." into polynomials
inline std::vector<Poly> parse_constraint_list(const std::string& body,
                                               const std::vector<std::string>& vars,
                                               int line) {
    std::vector<Poly> out;
    std::size_t start = 0;
    while (start <= body.size()) {
        std::size_t semi = body.find(';', start);
        std::string item = strip(body.substr(
            start, semi == std::string::npos ? std::string::npos : semi - start));
        if (item.empty()) throw ModelError("empty constraint", line);
        std::size_t ge = item.rfind(">=");
        if (ge == std::string::npos)
            throw ModelError("constraint must end with '>= 0'", line);
        if (strip(item.substr(ge + 2)) != "0")
            throw ModelError("right-hand side of a constraint must be 0", line);
        try {
            out.push_back(parse_polynomial(item.substr(0, ge), vars));
        } catch (const ParseError& e) {
            throw ModelError(e.what(), line);
        }
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    return out;
}

inline std::vector<Poly> parse_expr_list(const std::string& body,
                                         const std::vector<std::string>& vars,
                                         int line) {
    std::vector<Poly> out;
    std::size_t start = 0;
    while (start <= body.size()) {
        std::size_t semi = body.find(';', start);
        std::string item = strip(body.substr(
            start, semi == std::string::npos ? std::string::npos : semi - start));
        if (item.empty()) throw ModelError("empty expression", line);
        try {
            out.push_back(parse_polynomial(item, vars));
        } catch (const ParseError& e) {
            throw ModelError(e.what(), line);
        }
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    return out;
}

}  // namespace detail

inline HybridSystem parse_system(const std::string& text) {
    HybridSystem sys;
    std::vector<std::string> jump_vars;
    Location* cur_loc = nullptr;
    Transition* cur_tr = nullptr;
    enum { None, InLocation, InTransition, InInit } section = None;
    bool have_vars = false, have_init = false;

    std::istringstream is(text);
    std::string raw;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string s = detail::strip(raw);
        if (s.empty()) continue;

        std::istringstream ls(s);
        std::string kw;
        ls >> kw;
        std::string rest = detail::strip(s.substr(kw.size()));

        if (kw == "vars") {
            if (have_vars) throw ModelError("duplicate vars section", line);
            sys.variables = detail::split_ws(rest);
            if (sys.variables.empty())
                throw ModelError("vars needs at least one variable", line);
            for (const auto& v : sys.variables)
                if (v.back() == '\'')
                    throw ModelError("variable names may not be primed", line);
            have_vars = true;
            jump_vars = sys.jump_variables();
        } else if (kw == "location") {
            if (!have_vars) throw ModelError("vars must come first", line);
            if (rest.empty()) throw ModelError("location needs a name", line);
            if (sys.has_location(rest))
                throw ModelError("duplicate location " + rest, line);
            sys.locations.push_back(Location{rest, {}, {}, std::nullopt});
            cur_loc = &sys.locations.back();
            cur_tr = nullptr;
            section = InLocation;
        } else if (kw == "transition") {
            if (!have_vars) throw ModelError("vars must come first", line);
            auto parts = detail::split_ws(rest);
            if (parts.size() != 3 || parts[1] != "->")
                throw ModelError("expected: transition FROM -> TO", line);
            sys.transitions.push_back(Transition{parts[0], parts[2], {}, {}});
            cur_tr = &sys.transitions.back();
            cur_loc = nullptr;
            section = InTransition;
        } else if (kw == "init") {
            if (!have_vars) throw ModelError("vars must come first", line);
            if (rest.empty()) throw ModelError("init needs a location name", line);
            if (have_init) throw ModelError("duplicate init section", line);
            sys.initial_location = rest;
            have_init = true;
            section = InInit;
            cur_loc = nullptr;
            cur_tr = nullptr;
        } else if (kw == "field") {
            if (section != InLocation)
                throw ModelError("field outside a location section", line);
            cur_loc->field = detail::parse_expr_list(rest, sys.variables, line);
        } else if (kw == "invariant") {
            if (section != InLocation)
                throw ModelError("invariant outside a location section", line);
            cur_loc->invariant_set.constraints =
                detail::parse_constraint_list(rest, sys.variables, line);
        } else if (kw == "unsafe") {
            if (section != InLocation)
                throw ModelError("unsafe outside a location section", line);
            cur_loc->unsafe_set = SemialgebraicSet{
                detail::parse_constraint_list(rest, sys.variables, line)};
        } else if (kw == "guard") {
            if (section != InTransition)
                throw ModelError("guard outside a transition section", line);
            cur_tr->guard.constraints =
                detail::parse_constraint_list(rest, sys.variables, line);
        } else if (kw == "reset") {
            if (section != InTransition)
                throw ModelError("reset outside a transition section", line);
            cur_tr->reset.constraints =
                detail::parse_constraint_list(rest, jump_vars, line);
        } else if (kw == "set") {
            if (section != InInit)
                throw ModelError("set outside the init section", line);
            sys.initial_set.constraints =
                detail::parse_constraint_list(rest, sys.variables, line);
        } else {
            throw ModelError("unknown keyword '" + kw + "'", line);
        }
    }

    if (!have_vars) throw ModelError("missing vars section", 0);
    if (sys.locations.empty()) throw ModelError("no locations declared", 0);
    if (!have_init) throw ModelError("missing init section", 0);
    if (sys.initial_set.constraints.empty())
        throw ModelError("init section has no set", 0);
    if (!sys.has_location(sys.initial_location))
        throw ModelError("initial location " + sys.initial_location +
                             " is not declared",
                         0);
    const std::size_t n = sys.variables.size();
    for (auto& l : sys.locations) {
        if (l.field.size() != n)
            throw ModelError("location " + l.id + ": field has " +
                                 std::to_string(l.field.size()) +
                                 " components, expected " + std::to_string(n),
                             0);
        if (l.invariant_set.constraints.empty())
            l.invariant_set.constraints.push_back(
                Poly(sys.variables, Rational(1)));  // trivial invariant 1 >= 0
        if (l.unsafe_set && l.unsafe_set->constraints.empty())
            throw ModelError("location " + l.id + ": unsafe set is empty", 0);
    }
    for (const auto& t : sys.transitions) {
        if (!sys.has_location(t.from) || !sys.has_location(t.to))
            throw ModelError("transition " + t.from + " -> " + t.to +
                                 " names an undeclared location",
                             0);
        if (t.guard.constraints.empty() || t.reset.constraints.empty())
            throw ModelError("transition " + t.from + " -> " + t.to +
                                 " needs a guard and a reset",
                             0);
    }
    return sys;
}

inline std::string serialize_system(const HybridSystem& sys) {
    std::ostringstream os;
    os << "vars";
    for (const auto& v : sys.variables) os << " " << v;
    os << "\n";
    auto write_list = [&](const char* kw, const std::vector<Poly>& ps,
                          bool with_ge) {
        os << "  " << kw << " ";
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (i) os << " ; ";
            os << to_string(ps[i]);
            if (with_ge) os << " >= 0";
        }
        os << "\n";
    };
    for (const auto& l : sys.locations) {
        os << "location " << l.id << "\n";
        write_list("field", l.field, false);
        write_list("invariant", l.invariant_set.constraints, true);
        if (l.unsafe_set) write_list("unsafe", l.unsafe_set->constraints, true);
    }
    for (const auto& t : sys.transitions) {
        os << "transition " << t.from << " -> " << t.to << "\n";
        write_list("guard", t.guard.constraints, true);
        write_list("reset", t.reset.constraints, true);
    }
    os << "init " << sys.initial_location << "\n";
    write_list("set", sys.initial_set.constraints, true);
    return os.str();
}

// ---------------------------------------------------------------------------
// validation: structural checks happen at parse time; here we additionally
// sample the initial set against the initial location's invariant.  The box
// to sample is read off interval- and ball-shaped constraints; variables
// without a recognizable bound are skipped.
// ---------------------------------------------------------------------------

namespace detail {

struct Box {
    std::vector<double> lo, hi;
    std::vector<bool> known;
};

inline Box bounding_box(const SemialgebraicSet& set, std::size_t n) {
    Box box{std::vector<double>(n, -1.0), std::vector<double>(n, 1.0),
            std::vector<bool>(n, false)};
    auto note_lower = [&](std::size_t i, double v) {
        if (!box.known[i]) {
            box.lo[i] = v;
            box.hi[i] = v + 1.0;
            box.known[i] = true;
        } else {
            box.lo[i] = std::max(box.lo[i], v);
        }
    };
    auto note_upper = [&](std::size_t i, double v) {
        if (!box.known[i]) {
            box.hi[i] = v;
            box.lo[i] = v - 1.0;
            box.known[i] = true;
        } else {
            box.hi[i] = std::min(box.hi[i], v);
        }
    };
    auto note_interval = [&](std::size_t i, double a, double b) {
        if (a > b) std::swap(a, b);
        if (!box.known[i]) {
            box.lo[i] = a;
            box.hi[i] = b;
            box.known[i] = true;
        } else {
            box.lo[i] = std::max(box.lo[i], a);
            box.hi[i] = std::min(box.hi[i], b);
        }
    };
    for (const auto& p : set.constraints) {
        // classify which variables appear
        std::vector<std::size_t> used;
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& [m, c] : p.terms())
                if (m.exponents[i] != 0) {
                    used.push_back(i);
                    break;
                }
        }
        if (used.size() == 1 && p.degree() <= 2) {
            std::size_t i = used[0];
            Monomial m1(n), m2(n);
            m1.exponents[i] = 1;
            m2.exponents[i] = 2;
            double a2 = to_double(p.coefficient(m2));
            double a1 = to_double(p.coefficient(m1));
            double a0 = to_double(p.coefficient(Monomial(n)));
            if (a2 == 0) {
                if (a1 > 0) note_lower(i, -a0 / a1);
                else if (a1 < 0) note_upper(i, -a0 / a1);
            } else if (a2 < 0) {
                double disc = a1 * a1 - 4 * a2 * a0;
                if (disc >= 0) {
                    double r1 = (-a1 + std::sqrt(disc)) / (2 * a2);
                    double r2 = (-a1 - std::sqrt(disc)) / (2 * a2);
                    note_interval(i, r1, r2);
                }
            }
        } else if (p.degree() == 2) {
            // ball shape: c0 + sum_i (b_i x_i - x_i^2) with all quadratic
            // coefficients equal to -1 and no cross terms
            bool ball = true;
            for (const auto& [m, c] : p.terms()) {
                if (m.degree() == 2) {
                    bool cross = true;
                    for (std::size_t i = 0; i < n; ++i)
                        if (m.exponents[i] == 2) cross = false;
                    if (cross || c != -1) ball = false;
                }
            }
            for (std::size_t i : used) {
                Monomial m2(n);
                m2.exponents[i] = 2;
                if (p.coefficient(m2) != -1) ball = false;
            }
            if (!ball) continue;
            // p = r^2 - sum (x_i - a_i)^2 with a_i = b_i/2
            std::vector<double> center(n, 0.0);
            double c0 = to_double(p.coefficient(Monomial(n)));
            double rad2 = c0;
            for (std::size_t i : used) {
                Monomial m1(n);
                m1.exponents[i] = 1;
                center[i] = to_double(p.coefficient(m1)) / 2.0;
                rad2 += center[i] * center[i];
            }
            if (rad2 < 0) continue;
            double rad = std::sqrt(rad2);
            for (std::size_t i : used) note_interval(i, center[i] - rad, center[i] + rad);
        }
    }
    return box;
}

}  // namespace detail

inline std::vector<Warning> validate(const HybridSystem& sys) {
    std::vector<Warning> warnings;
    const std::size_t n = sys.variables.size();
    detail::Box box = detail::bounding_box(sys.initial_set, n);
    bool all_known = true;
    for (std::size_t i = 0; i < n; ++i) all_known = all_known && box.known[i];
    if (!all_known) {
        warnings.push_back(
            {"initial set has no recognizable bounding box; skipped the "
             "initial-invariant sample check"});
        return warnings;
    }
    const Location& l0 = sys.location(sys.initial_location);
    const int steps = 10;
    std::vector<double> pt(n);
    std::vector<int> idx(n, 0);
    bool warned = false;
    for (;;) {
        for (std::size_t i = 0; i < n; ++i)
            pt[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * idx[i] / steps;
        bool in_theta = true;
        for (const auto& c : sys.initial_set.constraints)
            if (c.evaluate<double>(pt) < -1e-12) in_theta = false;
        if (in_theta) {
            for (const auto& c : l0.invariant_set.constraints)
                if (c.evaluate<double>(pt) < -1e-9 && !warned) {
                    std::ostringstream os;
                    os << "sampled initial point (";
                    for (std::size_t i = 0; i < n; ++i)
                        os << (i ? ", " : "") << pt[i];
                    os << ") violates the invariant of location "
                       << sys.initial_location;
                    warnings.push_back({os.str()});
                    warned = true;
                }
        }
        std::size_t k = 0;
        while (k < n && ++idx[k] > steps) idx[k++] = 0;
        if (k == n) break;
    }
    return warnings;
}

inline bool reset_is_next_state_only(const HybridSystem& sys,
                                     const Transition& t) {
    const std::size_t n = sys.variables.size();
    for (const auto& p : t.reset.constraints)
        for (const auto& [m, c] : p.terms())
            for (std::size_t i = 0; i < n; ++i)
                if (m.exponents[i] != 0) return false;
    return true;
}

}  // namespace invforge
