#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "invforge/recover.hpp"

using namespace invforge;

namespace {

// tiny standalone family: match `target` over basis (1, x)
Stage2Family square_family(const Poly& target) {
    Stage2Family fam;
    fam.basis = enumerate_monomials(1, 1);
    fam.rows = enumerate_monomials(1, 2);
    fam.residual = target;
    fam.a = {{rat(1), rat(0), rat(0)},
             {rat(0), rat(2), rat(0)},
             {rat(0), rat(0), rat(1)}};
    fam.weights = {rat(1), rat(2), rat(1)};
    fam.rhs = {target.coefficient(Monomial({0})),
               target.coefficient(Monomial({1})),
               target.coefficient(Monomial({2}))};
    return fam;
}

}  // namespace

TEST_CASE("simultaneous diophantine approximation") {
    auto r = diophantine_recover({0.333333, 0.666667}, 100, 1e-4);
    CHECK(r.values == std::vector<Rational>{rat(1, 3), rat(2, 3)});
    CHECK(r.denominator == 3);

    CHECK_THROWS_AS(diophantine_recover({0.5}, 10, 0.0), std::invalid_argument);
    auto r2 = diophantine_recover({0.5}, 10, 1e-9);
    CHECK(r2.values[0] == rat(1, 2));

    // float rendering of -433/944: the contract only promises |out - v| <= tau
    double v = to_double(rat(-433, 944));
    auto r3 = diophantine_recover({v}, 1000, 1e-2);
    CHECK(r3.denominator <= 1000);
    CHECK(to_double(abs(r3.values[0] - rational_from_double(v))) <= 1e-2);
    // the smallest admissible denominator wins: -5/11 is within 1e-2
    CHECK(r3.values[0] == rat(-5, 11));
}

TEST_CASE("diophantine contract holds on random rationals") {
    std::mt19937 rng(13579);
    const mpz_class D = 1000;
    for (int trial = 0; trial < 1000; ++trial) {
        long q = std::uniform_int_distribution<long>(1, 1000)(rng);
        long p = std::uniform_int_distribution<long>(-8 * q, 8 * q)(rng);
        Rational truth = rat(p, q);
        double v = to_double(truth);
        auto r = diophantine_recover({v}, D, 1e-9);
        REQUIRE(r.denominator <= D);
        REQUIRE(to_double(abs(r.values[0] - rational_from_double(v))) <= 1e-9);
        // distinct fractions with denominators <= 1000 differ by >= 1e-6
        REQUIRE(r.values[0] == truth);
    }
}

TEST_CASE("margin rounding never rounds up") {
    CHECK(best_lower_rational(1.0000011, 1000) == rat(1));
    CHECK(best_lower_rational(to_double(rat(26, 931)), 1000) == rat(26, 931));
    CHECK(best_lower_rational(0.2499999, 1000) <=
          rational_from_double(0.2499999));
}

TEST_CASE("diagonal block rounding") {
    Eigen::MatrixXd m(2, 2);
    m << 0.3333, 1e-9, 1e-9, 0.6667;
    RecoverySettings cfg;
    cfg.denom_bound = 100;
    auto out = round_diagonal_block(m, cfg);
    CHECK(out.at(0, 0) == rat(1, 3));
    CHECK(out.at(1, 1) == rat(2, 3));
    CHECK(out.at(0, 1) == 0);

    auto zero = round_diagonal_block(Eigen::MatrixXd::Zero(3, 3), cfg);
    CHECK(zero == RationalMatrix(3));

    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 0.5, 0.5, 1.0;
    CHECK_THROWS_AS(round_diagonal_block(bad, cfg), NotDiagonallyDominant);
}

TEST_CASE("gauss-newton refinement") {
    RecoverySettings cfg;
    std::vector<std::string> vars = {"x"};
    Poly target = parse_polynomial("x^2 + 2*x + 1", vars);
    Stage2Family fam = square_family(target);

    Eigen::MatrixXd exact(2, 2);
    exact << 1, 1, 1, 1;
    auto r = gauss_newton_refine(fam, exact, cfg);
    CHECK(r.iterations == 0);
    CHECK(r.residual_norm <= 1e-12);
    CHECK((r.block - exact).cwiseAbs().maxCoeff() <= 1e-12);

    // perturbed start refines back to a solution
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> noise(-1e-3, 1e-3);
    Eigen::MatrixXd pert = exact;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) pert(i, j) += noise(rng);
    pert = 0.5 * (pert + pert.transpose());
    auto r2 = gauss_newton_refine(fam, pert, cfg);
    CHECK(r2.residual_norm <= 1e-10);

    // right-hand side outside the reachable span stalls at the floor
    Stage2Family bad = fam;
    bad.a = {{rat(1), rat(0), rat(0)}, {rat(1), rat(0), rat(0)}};
    bad.rhs = {rat(1), rat(2)};
    bad.rows = {Monomial({0}), Monomial({1})};
    Eigen::MatrixXd start = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(gauss_newton_refine(bad, start, cfg), StalledRefinement);
}

TEST_CASE("rational psd projection, full-rank path") {
    RecoverySettings cfg;
    std::vector<std::string> vars = {"x"};

    // identity with no constraints stays the identity
    Stage2Family none;
    none.basis = enumerate_monomials(1, 1);
    auto out =
        project_to_rational_psd(Eigen::MatrixXd::Identity(2, 2), none, cfg);
    CHECK(out == RationalMatrix::identity(2));

    // projection lands exactly on the equality subspace and stays PSD
    Poly target = parse_polynomial("3/2*x^2 + 2*x + 3/2", vars);
    Stage2Family fam = square_family(target);
    Eigen::MatrixXd m(2, 2);
    m << 1.5000003, 0.9999998, 0.9999998, 1.5000004;
    auto proj = project_to_rational_psd(m, fam, cfg);
    CHECK(proj.at(0, 0) == rat(3, 2));
    CHECK(proj.at(0, 1) * 2 == rat(2));
    CHECK(proj.at(1, 1) == rat(3, 2));
    CHECK(exact_psd_check(proj).psd);
}

TEST_CASE("rational psd projection, singular path") {
    RecoverySettings cfg;
    // numerically rank-1 matrix near the (1, 1/2) outer product
    Eigen::MatrixXd pert(2, 2);
    pert << 1.0, 0.5, 0.5, 0.25;
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> noise(-1e-9, 1e-9);
    for (int i = 0; i < 2; ++i)
        for (int j = i; j < 2; ++j) {
            double e = noise(rng);
            pert(i, j) += e;
            pert(j, i) = pert(i, j);
        }
    Stage2Family none;
    none.basis = enumerate_monomials(1, 1);
    auto out = project_to_rational_psd(pert, none, cfg);
    REQUIRE(exact_psd_check(out).psd);
    CHECK(out.at(0, 0) == rat(1));
    CHECK(out.at(0, 1) == rat(1, 2));
    CHECK(out.at(1, 1) == rat(1, 4));
    // the recovered kernel direction (-1, 2) annihilates the matrix
    CHECK(out.at(0, 0) * rat(-1) + out.at(0, 1) * rat(2) == 0);
}

TEST_CASE("projection failures are reported, not silenced") {
    RecoverySettings cfg;
    std::vector<std::string> vars = {"x"};
    Poly target = parse_polynomial("x", vars);  // x is not a sum of squares
    Stage2Family fam = square_family(target);
    Eigen::MatrixXd m(2, 2);
    m << 1e-3, 0.5, 0.5, 1e-3;
    CHECK_THROWS_AS(project_to_rational_psd(m, fam, cfg), ProjectionLeavesCone);
}
