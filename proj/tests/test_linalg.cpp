#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "invforge/rational_linalg.hpp"

using namespace invforge;

TEST_CASE("exact psd check on small matrices") {
    RationalMatrix m(2);
    m.set_sym(0, 0, rat(2));
    m.set_sym(0, 1, rat(1));
    m.set_sym(1, 1, rat(2));
    auto r = exact_psd_check(m);
    REQUIRE(r.psd);
    REQUIRE(r.pivot_values == RatVec{rat(2), rat(3, 2)});

    RationalMatrix ind(2);
    ind.set_sym(0, 0, rat(1));
    ind.set_sym(0, 1, rat(2));
    ind.set_sym(1, 1, rat(1));
    auto r2 = exact_psd_check(ind);
    REQUIRE_FALSE(r2.psd);
    CHECK(quadratic_form(ind, r2.witness) < 0);
    CHECK(r2.witness_value == quadratic_form(ind, r2.witness));

    CHECK(exact_psd_check(RationalMatrix::identity(5)).psd);
    CHECK(exact_psd_check(RationalMatrix(3)).psd);  // zero matrix

    // zero diagonal with a nonzero off-diagonal entry
    RationalMatrix z(2);
    z.set_sym(0, 1, rat(1, 3));
    auto r3 = exact_psd_check(z);
    REQUIRE_FALSE(r3.psd);
    CHECK(quadratic_form(z, r3.witness) < 0);
}

TEST_CASE("exact psd check agrees with a floating eigenvalue oracle") {
    std::mt19937 rng(424242);
    std::uniform_int_distribution<int> num(-20, 20);
    std::uniform_int_distribution<int> den(1, 10);
    std::uniform_int_distribution<int> dim(2, 6);
    int done = 0;
    while (done < 1000) {
        std::size_t n = dim(rng);
        RationalMatrix m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j)
                m.set_sym(i, j, rat(num(rng), den(rng)));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(m));
        double lo = es.eigenvalues().minCoeff();
        if (std::fabs(lo) < 1e-3) continue;  // keep well-conditioned cases only
        ++done;
        auto r = exact_psd_check(m);
        REQUIRE(r.psd == (lo > 0));
        if (!r.psd) REQUIRE(quadratic_form(m, r.witness) < 0);
    }
}

TEST_CASE("rational elimination utilities") {
    RatMat a = {{rat(1), rat(2), rat(3)}};
    auto ns = nullspace(a);
    REQUIRE(ns.size() == 2);
    for (const auto& v : ns) {
        Rational acc(0);
        for (std::size_t i = 0; i < 3; ++i) acc += a[0][i] * v[i];
        CHECK(acc == 0);
    }

    RatMat sq = {{rat(2), rat(1)}, {rat(1), rat(3)}};
    auto x = solve_consistent(sq, {rat(5), rat(10)});
    REQUIRE(x.has_value());
    CHECK((*x)[0] * 2 + (*x)[1] == rat(5));
    CHECK((*x)[0] + (*x)[1] * 3 == rat(10));

    RatMat bad = {{rat(1), rat(1)}, {rat(2), rat(2)}};
    CHECK_FALSE(solve_consistent(bad, {rat(1), rat(3)}).has_value());
    CHECK(solve_consistent(bad, {rat(1), rat(2)}).has_value());
}

TEST_CASE("minimum norm correction solves the normal equations exactly") {
    RatMat a = {{rat(1), rat(1)}};
    auto d = min_norm_correction(a, {rat(1), rat(1)}, {rat(2)});
    REQUIRE(d.has_value());
    CHECK((*d)[0] == rat(1));
    CHECK((*d)[1] == rat(1));

    // weighted: heavier weight moves less
    auto dw = min_norm_correction(a, {rat(4), rat(1)}, {rat(5)});
    REQUIRE(dw.has_value());
    CHECK((*dw)[0] + (*dw)[1] == rat(5));
    CHECK((*dw)[0] * 4 == (*dw)[1]);

    // dependent but consistent rows are fine; inconsistent ones fail
    RatMat dep = {{rat(1), rat(1)}, {rat(2), rat(2)}};
    CHECK(min_norm_correction(dep, {rat(1), rat(1)}, {rat(1), rat(2)}).has_value());
    CHECK_FALSE(
        min_norm_correction(dep, {rat(1), rat(1)}, {rat(1), rat(3)}).has_value());
}
