#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <random>

#include "invforge/polynomial.hpp"

using namespace invforge;

namespace {

std::uint32_t test_seed() {
    if (const char* s = std::getenv("INVFORGE_SEED")) return std::strtoul(s, nullptr, 10);
    return 20240811u;
}

const std::vector<std::string> XY = {"x", "y"};
const std::vector<std::string> X12 = {"x1", "x2"};

Poly P(const std::string& s, const std::vector<std::string>& vars = XY) {
    return parse_polynomial(s, vars);
}

Poly random_poly(std::mt19937& rng, const std::vector<std::string>& vars,
                 int maxdeg) {
    std::uniform_int_distribution<int> num(-9, 9);
    std::uniform_int_distribution<int> den(1, 7);
    Poly p(vars);
    auto monos = enumerate_monomials(vars.size(), maxdeg);
    std::uniform_int_distribution<std::size_t> pick(0, monos.size() - 1);
    int terms = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int t = 0; t < terms; ++t)
        p.add_term(monos[pick(rng)], rat(num(rng), den(rng)));
    return p;
}

}  // namespace

TEST_CASE("polynomial addition") {
    CHECK(P("x+1") + P("x-1") == P("2*x"));
    Poly p = P("3*x^2*y - 7/2*y + 1");
    CHECK(p + Poly(XY) == p);
    CHECK(P("x^2+2*x+1") + P("-x^2") == P("2*x+1"));
    CHECK_THROWS_AS(P("x") + P("x1", X12), PolyError);
}

TEST_CASE("polynomial multiplication") {
    CHECK(P("x+1") * P("x+1") == P("x^2+2*x+1"));
    Poly p = P("x*y - 4*y^2 + 2");
    CHECK(p * Poly(XY, Rational(1)) == p);
    CHECK(P("(x-4)*(x-4.5)") == P("x^2 - 8.5*x + 18"));
    CHECK(P("(4-x)*(x-4.5)") == P("-x^2 + 8.5*x - 18"));
}

TEST_CASE("lie derivative") {
    const std::vector<Poly> f2 = {P("x2", X12), P("-x1 + x2", X12)};
    CHECK(lie_derivative(P("x1", X12), f2) == P("x2", X12));

    Poly phi = P("-22/49 + 319/931*x1 - 251/931*x2 + 239/931*x1^2", X12);
    CHECK(lie_derivative(phi, f2) ==
          P("251/931*x1 + 68/931*x2 + 478/931*x1*x2", X12));

    CHECK(lie_derivative(Poly(X12, rat(5)), f2).is_zero());
    CHECK_THROWS_AS(lie_derivative(P("x"), {P("x")}), PolyError);
}

TEST_CASE("monomial enumeration") {
    auto ms = enumerate_monomials(2, 1);
    REQUIRE(ms.size() == 3);
    CHECK(ms[0].exponents == std::vector<int>{0, 0});
    CHECK(ms[1].exponents == std::vector<int>{0, 1});
    CHECK(ms[2].exponents == std::vector<int>{1, 0});

    CHECK(enumerate_monomials(2, 4).size() == 15);

    // exhaustive oracle for n=3, d=2
    std::vector<Monomial> oracle;
    for (int a = 0; a <= 2; ++a)
        for (int b = 0; b <= 2; ++b)
            for (int c = 0; c <= 2; ++c)
                if (a + b + c <= 2) oracle.push_back(Monomial({a, b, c}));
    std::sort(oracle.begin(), oracle.end(), grlex_less);
    auto got = enumerate_monomials(3, 2);
    REQUIRE(got.size() == 10);
    CHECK(got == oracle);
}

TEST_CASE("monomial enumeration properties") {
    std::mt19937 rng(test_seed());
    auto choose = [](int n, int k) {
        long long r = 1;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return static_cast<std::size_t>(r);
    };
    for (int trial = 0; trial < 50; ++trial) {
        int n = std::uniform_int_distribution<int>(1, 4)(rng);
        int d = std::uniform_int_distribution<int>(0, 6)(rng);
        auto ms = enumerate_monomials(n, d);
        CHECK(ms.size() == choose(n + d, d));
        for (std::size_t i = 1; i < ms.size(); ++i)
            CHECK(grlex_less(ms[i - 1], ms[i]));
    }
}

TEST_CASE("exact evaluation") {
    CHECK(P("x^2+y^2").evaluate<Rational>({rat(3), rat(4)}) == rat(25));
    CHECK(P("(4-x)*(x-4.5)").evaluate<Rational>({rat(17, 4), rat(1)}) ==
          rat(1, 16));
    CHECK(Poly(XY).evaluate<Rational>({rat(7), rat(-2)}) == 0);
}

TEST_CASE("ring axioms hold exactly on random rational polynomials") {
    std::mt19937 rng(test_seed());
    for (int trial = 0; trial < 1000; ++trial) {
        Poly p = random_poly(rng, XY, 4);
        Poly q = random_poly(rng, XY, 4);
        Poly r = random_poly(rng, XY, 4);
        REQUIRE((p + q) * r == p * r + q * r);
        REQUIRE(p * q == q * p);
        REQUIRE((p * q) * r == p * (q * r));
        REQUIRE(p + (-p) == Poly(XY));
    }
}

TEST_CASE("lie derivative is linear") {
    std::mt19937 rng(test_seed() + 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Poly> field = {random_poly(rng, XY, 2), random_poly(rng, XY, 2)};
        Poly p = random_poly(rng, XY, 4);
        Poly q = random_poly(rng, XY, 4);
        Rational a = rat(3, 7), b = rat(-5, 2);
        REQUIRE(lie_derivative(p * a + q * b, field) ==
                lie_derivative(p, field) * a + lie_derivative(q, field) * b);
    }
}

namespace {
// test-only flow oracle: RK4 integration of xdot = f(x)
std::vector<double> flow_rk4(const std::vector<PolyF>& f,
                             std::vector<double> x, double t, int substeps) {
    const double h = t / substeps;
    auto eval = [&](const std::vector<double>& p) {
        std::vector<double> v(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) v[i] = f[i].evaluate<double>(p);
        return v;
    };
    for (int s = 0; s < substeps; ++s) {
        auto k1 = eval(x);
        std::vector<double> x2(x), x3(x), x4(x);
        for (std::size_t i = 0; i < x.size(); ++i) x2[i] += 0.5 * h * k1[i];
        auto k2 = eval(x2);
        for (std::size_t i = 0; i < x.size(); ++i) x3[i] += 0.5 * h * k2[i];
        auto k3 = eval(x3);
        for (std::size_t i = 0; i < x.size(); ++i) x4[i] += h * k3[i];
        auto k4 = eval(x4);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return x;
}
}  // namespace

TEST_CASE("float lie derivative agrees with finite differences along the flow") {
    std::mt19937 rng(test_seed() + 2);
    std::uniform_real_distribution<double> coord(-1.5, 1.5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PolyF> f = {to_float(random_poly(rng, XY, 2)),
                                to_float(random_poly(rng, XY, 2))};
        PolyF phi = to_float(random_poly(rng, XY, 3));
        std::vector<double> x0 = {coord(rng), coord(rng)};
        const double h = 1e-5;
        double fwd = phi.evaluate<double>(flow_rk4(f, x0, h, 4));
        double bwd = phi.evaluate<double>(flow_rk4(f, x0, -h, 4));
        double fd = (fwd - bwd) / (2 * h);
        double lie = lie_derivative(phi, f).evaluate<double>(x0);
        double scale = std::max({1.0, std::fabs(lie), std::fabs(fd)});
        REQUIRE(std::fabs(fd - lie) / scale <= 1e-6);
    }
}

TEST_CASE("decimal literals parse to exact rationals") {
    CHECK(P("0.01").coefficient(Monomial(2)) == rat(1, 100));
    CHECK(P("4.5").coefficient(Monomial(2)) == rat(9, 2));
    CHECK(P("-2.80*x") == P("-14/5*x"));
}

TEST_CASE("polynomial text round trip and formatting") {
    Poly phi = P("-22/49 + 319/931*x1 - 251/931*x2 + 239/931*x1^2", X12);
    CHECK(to_string(phi) == "-22/49 + 319/931*x1 - 251/931*x2 + 239/931*x1^2");
    CHECK(parse_polynomial(to_string(phi), X12) == phi);
    CHECK(to_string(Poly(X12)) == "0");

    // coefficient written directly against a variable
    CHECK(P("319/931x1", X12) == P("319/931*x1", X12));

    std::mt19937 rng(test_seed() + 3);
    for (int trial = 0; trial < 200; ++trial) {
        Poly p = random_poly(rng, X12, 5);
        CHECK(parse_polynomial(to_string(p), X12) == p);
    }
}

TEST_CASE("parser rejects bad input") {
    CHECK_THROWS_AS(P("x1 + 1"), ParseError);       // undeclared variable
    CHECK_THROWS_AS(P("x + "), ParseError);         // dangling operator
    CHECK_THROWS_AS(P("(x+1"), ParseError);         // unbalanced paren
    CHECK_THROWS_AS(P("x^y"), ParseError);          // non-integer exponent
    CHECK_THROWS_AS(P("1/(x+1)"), ParseError);      // division by non-constant
    CHECK_THROWS_AS(P("x y"), ParseError);          // missing operator
}

TEST_CASE("float dead zone drops negligible terms") {
    PolyF p(XY);
    p.add_term(Monomial({1, 0}), 1.0);
    PolyF tiny(XY);
    tiny.add_term(Monomial({0, 1}), 1e-300);
    CHECK((p + tiny).terms().size() == 1);
}
