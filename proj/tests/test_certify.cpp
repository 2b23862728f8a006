#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "invforge/certify.hpp"

using namespace invforge;

namespace {
std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}
const std::string kModels = INVFORGE_MODELS_DIR;
const std::vector<std::string> X12 = {"x1", "x2"};
}  // namespace

TEST_CASE("golden certificate replay verifies exactly") {
    std::string systext = read_file(kModels + "/example3.hys");
    HybridSystem sys = parse_system(systext);
    Certificate cert =
        parse_certificate(read_file(kModels + "/example3_golden.cert"));

    auto report = verify(sys, cert, systext);
    CHECK(report.warnings.empty());  // hash matches
    REQUIRE(report.structurally_valid());
    REQUIRE(report.certified);
    REQUIRE(report.identities.size() == 6);
    for (const auto& ist : report.identities) {
        INFO(ist.name);
        CHECK(ist.zero_residual);
        CHECK(ist.residual.is_zero());
    }
    for (const auto& ms : report.matrices) {
        INFO(ms.name);
        CHECK(ms.psd);
    }
    REQUIRE(report.margins.size() == 3);
    for (const auto& [name, m] : report.margins) CHECK(m > 0);
}

TEST_CASE("golden certificate fails closed under tampering") {
    std::string systext = read_file(kModels + "/example3.hys");
    HybridSystem sys = parse_system(systext);
    Certificate cert =
        parse_certificate(read_file(kModels + "/example3_golden.cert"));

    SECTION("zero margin is rejected") {
        for (auto& id : cert.identities)
            if (id.kind == IdentityKind::Flow && id.location == "l1")
                id.margin = Rational(0);
        auto report = verify(sys, cert, systext);
        CHECK_FALSE(report.certified);
        CHECK(report.reason.find("margin") != std::string::npos);
    }
    SECTION("a perturbed invariant leaves a nonzero residual in condition (i)") {
        Poly phi = cert.invariants.at("l1");
        phi.add_term(Monomial({0, 0}), rat(-23, 49) - rat(-22, 49));
        cert.invariants["l1"] = phi;
        cert.invariants["l2"] = phi;
        auto report = verify(sys, cert, systext);
        CHECK_FALSE(report.certified);
        REQUIRE_FALSE(report.identities.empty());
        CHECK_FALSE(report.identities[0].zero_residual);
        CHECK_FALSE(report.identities[0].residual.is_zero());
    }
    SECTION("any single Gram entry flipped by 1e-6 rejects") {
        for (std::size_t iid = 0; iid < cert.identities.size(); ++iid) {
            auto& slot0 = cert.identities[iid].slots[0];
            for (std::size_t i = 0; i < slot0.matrix.n; ++i)
                for (std::size_t j = i; j < slot0.matrix.n; ++j) {
                    Certificate mutant = cert;
                    auto& m = mutant.identities[iid].slots[0].matrix;
                    m.set_sym(i, j, m.at(i, j) + rat(1, 1000000));
                    auto report = verify(sys, mutant, systext);
                    INFO("identity " << iid << " entry " << i << "," << j);
                    CHECK_FALSE(report.certified);
                }
        }
    }
    SECTION("hash mismatch warns but does not reject") {
        cert.system_hash = "0000000000000000";
        auto report = verify(sys, cert, systext);
        CHECK(report.certified);
        CHECK_FALSE(report.warnings.empty());
    }
    SECTION("missing multiplier slots reject") {
        cert.identities[0].slots.pop_back();
        auto report = verify(sys, cert, systext);
        CHECK_FALSE(report.certified);
    }
    SECTION("variable mismatch is a structural problem") {
        cert.variables = {"a", "b"};
        auto report = verify(sys, cert, systext);
        CHECK_FALSE(report.structurally_valid());
    }
    SECTION("differing invariants in inductive mode reject") {
        Poly phi = cert.invariants.at("l2");
        phi.add_term(Monomial({0, 1}), rat(1, 7));
        cert.invariants["l2"] = phi;
        auto report = verify(sys, cert, systext);
        CHECK_FALSE(report.certified);
    }
}

TEST_CASE("listed square decompositions reproduce the multiplier polynomials") {
    Certificate cert =
        parse_certificate(read_file(kModels + "/example3_golden.cert"));
    auto sq = [&](const std::string& w, const std::string& h) {
        return std::make_pair(rational_from_string(w), parse_polynomial(h, X12));
    };
    struct Case {
        std::size_t identity;
        std::vector<std::pair<Rational, Poly>> squares;
    };
    std::vector<Case> cases;
    cases.push_back({0,
                     {sq("931/838", "838/931 - 251/1862*x2 - 1565/1862*x1"),
                      sq("3120712/2042055", "2042055/3120712*x2 - 392815/3120712*x1"),
                      sq("380230641/46469677", "46469677/380230641*x1")}});
    cases.push_back({1,
                     {sq("1900/8403", "8403/1900 - 14169/9310*x2 - 4463/9310*x1"),
                      sq("127778819/13782225",
                         "13782225/127778819*x2 - 21078749/127778819*x1"),
                      sq("12831251475/2601209876", "2601209876/12831251475*x1")}});
    cases.push_back({2,
                     {sq("37240/133187", "133187/37240 - 1997/1064*x2 - 1271/1862*x1"),
                      sq("991976776/205638355",
                         "205638355/991976776*x2 - 12690935/35427742*x1"),
                      sq("38289861701/13835779654", "13835779654/38289861701*x1")}});
    cases.push_back({3,
                     {sq("931/153", "153/931 + 149/931*x2 + 89/266*x1"),
                      sq("142443/19415", "19415/142443*x2 - 29048/142443*x1"),
                      sq("72301460/4096293", "4096293/72301460*x1")}});
    cases.push_back({4,
                     {sq("931/3751", "3751/931 - 3373/3724*x2 - 3337/3724*x1"),
                      sq("55874896/7767975", "7767975/55874896*x2 + 3088123/55874896*x1"),
                      sq("7231984725/1110827906", "1110827906/7231984725*x1")}});
    cases.push_back({5,
                     {sq("3325/4992", "4992/3325 + 197/266*x2 + 809/1862*x1"),
                      sq("978432/235283", "235283/978432*x2 - 3984325/18590208*x1"),
                      sq("29133446909/941925575", "941925575/29133446909*x1")}});
    for (const auto& c : cases) {
        const GramSlot& slot0 = cert.identities[c.identity].slots[0];
        Poly target = gram_polynomial(slot0.basis, slot0.matrix, X12);
        INFO("identity " << c.identity);
        CHECK(verify_sos_identity(target, c.squares));
    }

    // the initial-condition multiplier matches the printed polynomial
    Poly sigma0 = gram_polynomial(cert.identities[0].slots[0].basis,
                                  cert.identities[0].slots[0].matrix, X12);
    CHECK(sigma0 ==
          parse_polynomial(
              "838/931 - 1565/931*x1 - 251/931*x2 + 867/931*x1^2 + 628/931*x2^2",
              X12));
}

TEST_CASE("verify_sos_identity basics") {
    std::vector<std::string> xv = {"x"};
    Poly sq = parse_polynomial("x^2+2*x+1", xv);
    CHECK(verify_sos_identity(sq, {{rat(1), parse_polynomial("x+1", xv)}}));
    CHECK_FALSE(verify_sos_identity(parse_polynomial("x", xv),
                                    {{rat(1), parse_polynomial("x+1", xv)}}));
    CHECK_FALSE(
        verify_sos_identity(sq, {{rat(-1), parse_polynomial("x+1", xv)}}));
}

TEST_CASE("certificate text round trip") {
    std::string text = read_file(kModels + "/example3_golden.cert");
    Certificate cert = parse_certificate(text);
    Certificate again = parse_certificate(serialize_certificate(cert));
    CHECK(cert == again);

    // verdict is invariant under the round trip
    std::string systext = read_file(kModels + "/example3.hys");
    HybridSystem sys = parse_system(systext);
    CHECK(verify(sys, cert, systext).certified ==
          verify(sys, again, systext).certified);
}

TEST_CASE("corrupted certificates never slip through silently") {
    std::string text = read_file(kModels + "/example3_golden.cert");
    std::string systext = read_file(kModels + "/example3.hys");
    HybridSystem sys = parse_system(systext);

    // flip one digit inside a matrix row
    auto pos = text.find("838/931");
    REQUIRE(pos != std::string::npos);
    std::string bad = text;
    bad[pos] = '9';
    bool caught = false;
    try {
        Certificate cert = parse_certificate(bad);
        caught = !verify(sys, cert, systext).certified;
    } catch (const CertificateError&) {
        caught = true;
    }
    CHECK(caught);

    CHECK_THROWS_AS(parse_certificate(""), CertificateError);
    CHECK_THROWS_AS(parse_certificate("invcert 1\nend\n garbage"),
                    CertificateError);
}

TEST_CASE("the recomputed Lie derivative at the second mode matches") {
    std::string systext = read_file(kModels + "/example3.hys");
    HybridSystem sys = parse_system(systext);
    Certificate cert =
        parse_certificate(read_file(kModels + "/example3_golden.cert"));
    auto plan = plan_identities(sys, Mode::Inductive);
    const IdentitySpec* flow2 = nullptr;
    for (const auto& spec : plan)
        if (spec.kind == IdentityKind::Flow && spec.location == "l2")
            flow2 = &spec;
    REQUIRE(flow2 != nullptr);
    Poly lie = identity_target(sys, *flow2, cert.invariants);
    CHECK(lie == parse_polynomial("251/931*x1 + 68/931*x2 + 478/931*x1*x2", X12));
}
