#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "invforge/sdp.hpp"

using namespace invforge;

namespace {

SdpProblem feasibility_block(std::size_t n, bool in_obj = true) {
    SdpProblem p;
    GramBlockDesc b;
    b.id = "X";
    b.basis = enumerate_monomials(1, static_cast<int>(n) - 1);  // size n
    b.in_objective = in_obj;
    p.blocks.push_back(b);
    return p;
}

Equality entry_eq(std::size_t i, std::size_t j, const Rational& rhs) {
    Equality e;
    e.gram_terms.push_back(GramTerm{0, i, j, Rational(1)});
    e.rhs = rhs;
    return e;
}

}  // namespace

TEST_CASE("trace minimization picks the minimum-eigenvalue direction") {
    // minimize tr(diag(1,2) X) s.t. tr(X) = 1:  encoded as tr(X) + z with
    // z = X_22 split into a nonnegative slack scalar
    SdpProblem p = feasibility_block(2);
    p.scalars.push_back(ScalarVar{"z", Rational(0), 1.0});
    Equality tr;
    tr.gram_terms.push_back(GramTerm{0, 0, 0, Rational(1)});
    tr.gram_terms.push_back(GramTerm{0, 1, 1, Rational(1)});
    tr.rhs = 1;
    p.equalities.push_back(tr);
    Equality link;
    link.gram_terms.push_back(GramTerm{0, 1, 1, Rational(1)});
    link.scalar_terms.push_back(ScalarTerm{0, Rational(-1)});
    link.rhs = 0;
    p.equalities.push_back(link);

    auto [status, raw] = solve_sdp(p);
    REQUIRE(status.kind == SolverStatusKind::Feasible);
    CHECK(raw.blocks[0](0, 0) == Catch::Approx(1.0).margin(1e-6));
    CHECK(raw.blocks[0](1, 1) == Catch::Approx(0.0).margin(1e-6));
    double obj = raw.blocks[0](0, 0) + 2 * raw.blocks[0](1, 1);
    CHECK(obj == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("trivial trace-minimal completion") {
    SdpProblem p = feasibility_block(2);
    p.equalities.push_back(entry_eq(0, 0, rat(1)));
    auto [status, raw] = solve_sdp(p);
    REQUIRE(status.kind == SolverStatusKind::Feasible);
    CHECK(raw.blocks[0](0, 0) == Catch::Approx(1.0).margin(1e-6));
    CHECK(raw.blocks[0](1, 1) == Catch::Approx(0.0).margin(1e-6));
    CHECK(raw.blocks[0](0, 1) == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("negative diagonal requirement is infeasible") {
    SdpProblem p = feasibility_block(2);
    p.equalities.push_back(entry_eq(0, 0, rat(1)));
    p.equalities.push_back(entry_eq(1, 1, rat(-1)));
    auto [status, raw] = solve_sdp(p);
    CHECK(status.kind == SolverStatusKind::Infeasible);
}

TEST_CASE("constructed feasible instances solve to tolerance") {
    std::mt19937 rng(987654);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int kkt_checked = 0;
    for (int inst = 0; inst < 100; ++inst) {
        std::size_t n = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
        std::size_t m = std::uniform_int_distribution<std::size_t>(1, n * 2)(rng);
        SdpProblem p = feasibility_block(n);
        // ground-truth interior point X0 = G G^T + I/10
        Eigen::MatrixXd g(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) g(i, j) = gauss(rng);
        Eigen::MatrixXd x0 = g * g.transpose() +
                             0.1 * Eigen::MatrixXd::Identity(n, n);
        for (std::size_t k = 0; k < m; ++k) {
            Equality e;
            double acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j) {
                    int c = std::uniform_int_distribution<int>(-2, 2)(rng);
                    if (!c) continue;
                    e.gram_terms.push_back(GramTerm{0, i, j, rat(c)});
                    acc += c * x0(i, j);
                }
            e.rhs = rational_from_double(acc);
            p.equalities.push_back(std::move(e));
        }
        auto [status, raw] = solve_sdp(p);
        REQUIRE(status.kind == SolverStatusKind::Feasible);
        auto rep = check_kkt(p, raw);
        REQUIRE(rep.primal_residual <= 1e-8 * (1 + x0.norm()));
        REQUIRE(rep.dual_residual <= 1e-6);
        ++kkt_checked;
    }
    CHECK(kkt_checked == 100);
}

TEST_CASE("kkt report on a hand-built exact solution") {
    SdpProblem p = feasibility_block(2);
    p.equalities.push_back(entry_eq(0, 0, rat(1)));
    auto [status, raw] = solve_sdp(p);
    REQUIRE(status.kind == SolverStatusKind::Feasible);
    auto rep = check_kkt(p, raw);
    CHECK(rep.primal_residual <= 1e-8);
    CHECK(rep.gap <= 1e-6);

    // perturbing the solution shows up in the primal residual
    RawSolution bumped = raw;
    bumped.blocks[0] += 1e-3 * Eigen::MatrixXd::Identity(2, 2);
    auto rep2 = check_kkt(p, bumped);
    CHECK(rep2.primal_residual == Catch::Approx(1e-3).epsilon(0.05));
}

TEST_CASE("solver is deterministic") {
    SdpProblem p = feasibility_block(3);
    p.equalities.push_back(entry_eq(0, 0, rat(2)));
    p.equalities.push_back(entry_eq(0, 1, rat(1)));
    p.equalities.push_back(entry_eq(2, 2, rat(1)));
    auto [s1, r1] = solve_sdp(p);
    auto [s2, r2] = solve_sdp(p);
    REQUIRE(s1.kind == SolverStatusKind::Feasible);
    REQUIRE(s1.iterations == s2.iterations);
    REQUIRE((r1.blocks[0] - r2.blocks[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bounded scalars are shifted into the cone") {
    SdpProblem p = feasibility_block(1);
    p.scalars.push_back(ScalarVar{"s", rat(1, 2), 0.0});
    Equality e;
    e.gram_terms.push_back(GramTerm{0, 0, 0, Rational(1)});
    e.scalar_terms.push_back(ScalarTerm{0, Rational(1)});
    e.rhs = rat(2);
    p.equalities.push_back(e);
    auto [status, raw] = solve_sdp(p);
    REQUIRE(status.kind == SolverStatusKind::Feasible);
    CHECK(raw.scalars[0] >= 0.5 - 1e-9);
    CHECK(raw.blocks[0](0, 0) + raw.scalars[0] == Catch::Approx(2.0).margin(1e-6));
    CHECK(raw.blocks[0](0, 0) == Catch::Approx(0.0).margin(1e-6));
}
