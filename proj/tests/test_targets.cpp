#include "oracles.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/targets.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace smoothmix;

namespace {

const std::vector<double> kX1{1.0};

TargetDensity expo(double rate) { return TargetDensity::exponential(Curve::constant(rate), XLaw::point({0.5})); }

}  // namespace

TEST_CASE("pdf examples") {
    const auto e = TargetDensity::exponential(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
    CHECK(e.pdf(0.0, kX1) == doctest::Approx(1.0));

    const std::vector<double> x2{2.0};
    const auto u = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
    CHECK(u.pdf(0.5, x2) == doctest::Approx(0.5));

    const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({3.7}));
    CHECK(l.pdf(0.0, kX1) == doctest::Approx(0.5));
}

TEST_CASE("cdf and quantile examples") {
    const auto e = expo(1.0);
    CHECK(e.cdf(std::log(2.0), kX1) == doctest::Approx(0.5));
    CHECK(e.quantile(0.5, kX1) == doctest::Approx(0.693147).epsilon(1e-6));

    const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
    CHECK(l.cdf(0.0, kX1) == doctest::Approx(0.5));
    CHECK(l.quantile(0.25, kX1) == doctest::Approx(std::log(0.5)));

    const auto u2 = TargetDensity::uniform(Curve::constant(2.0), XLaw::point({0.5}));
    CHECK(u2.cdf(1.0, kX1) == doctest::Approx(0.5));
    const auto u3 = TargetDensity::uniform(Curve::constant(3.0), XLaw::point({0.5}));
    CHECK(u3.quantile(1.0 / 3.0, kX1) == doctest::Approx(1.0));
}

TEST_CASE("quantile inverts cdf on the interior") {
    const std::vector<TargetDensity> ts{
        expo(1.7),
        TargetDensity::laplace(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1)),
        TargetDensity::student_t(Curve::constant(0.3), Curve::constant(1.5), 4.0, XLaw::unit_cube(1)),
        TargetDensity::bounded_smooth(Curve::affine(-1.0, {2.0}), XLaw::unit_cube(1)),
    };
    const std::vector<double> x{0.3};
    for (const auto& t : ts) {
        for (double p : {0.01, 0.2, 0.5, 0.77, 0.99}) {
            const double y = t.quantile(p, x);
            CHECK(t.cdf(y, x) == doctest::Approx(p).epsilon(1e-10));
        }
    }
}

TEST_CASE("pdf integrates to one") {
    const std::vector<double> x{0.6};
    const auto st = TargetDensity::student_t(Curve::constant(0.0), Curve::constant(1.0), 3.0, XLaw::unit_cube(1));
    // Student-t tails decay slowly; integrate far out and add the analytic tail.
    const double body = oracle::trapezoid([&](double y) { return st.pdf(y, x); }, -2000.0, 2000.0, 4000000);
    CHECK(body + 2.0 * st.sf(2000.0, x) == doctest::Approx(1.0).epsilon(1e-8));

    const auto bs = TargetDensity::bounded_smooth(Curve::affine(-1.0, {2.0}), XLaw::unit_cube(1));
    CHECK(oracle::trapezoid([&](double y) { return bs.pdf(y, x); }, 0.0, 1.0, 1000) == doctest::Approx(1.0));
}

TEST_CASE("cell probabilities") {
    const auto e = expo(1.0);
    CHECK(e.cell_prob(0.0, std::log(2.0), kX1) == doctest::Approx(0.5));

    const auto u = TargetDensity::uniform(Curve::constant(1.0), XLaw::point({0.5}));
    CHECK(u.cell_prob(0.25, 0.75, kX1) == doctest::Approx(0.5));

    const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
    const double ref = oracle::trapezoid([&](double y) { return l.pdf(y, kX1); }, -0.1, 0.1, 1000000);
    CHECK(l.cell_prob(-0.1, 0.1, kX1) == doctest::Approx(ref).epsilon(1e-9));
    CHECK(l.cell_prob(-0.1, 0.1, kX1) == doctest::Approx(2.0 * (1.0 - 0.5 * std::exp(-0.1)) - 1.0));
}

TEST_CASE("sampling") {
    const auto e = expo(1.0);
    CHECK_THROWS_AS(e.sample_joint(0, 1), Error);
    const auto a = e.sample_joint(1, 42);
    const auto b = e.sample_joint(1, 42);
    CHECK(a.y[0] == b.y[0]);
    CHECK(a.x[0] == b.x[0]);

    const auto big = e.sample_joint(1000000, 3);
    double mean = 0.0;
    for (double y : big.y) mean += y;
    mean /= static_cast<double>(big.size());
    CHECK(std::abs(mean - 1.0) < 0.003);

    const auto u = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
    const auto s = u.sample_joint(20000, 9);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s.y[i] >= 0.0);
        CHECK(s.y[i] <= s.x[i]);
    }

    // Slices regenerate the same draws.
    JointSample part;
    e.sample_range(5000, 10, 3, part);
    for (std::size_t i = 0; i < 10; ++i) CHECK(part.y[i] == big.y[5000 + i]);
}

TEST_CASE("gradient sup") {
    const auto e = TargetDensity::exponential(Curve::constant(2.0), XLaw::point({0.5}));
    CHECK(e.grad_log_pdf_sup(0.3, 0.9, kX1) == doctest::Approx(2.0));
    const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
    CHECK(l.grad_log_pdf_sup(0.5, 1.5, kX1) == doctest::Approx(1.0));

    const auto st = TargetDensity::student_t(Curve::constant(0.0), Curve::constant(1.0), 3.0, XLaw::point({0.5}));
    const double nu = 3.0;
    const double ref = oracle::grid_max([&](double z) { return std::abs((nu + 1.0) * z / (nu + z * z)); }, 0.0, 0.1, 10000);
    CHECK(st.grad_log_pdf_sup(0.0, 0.1, kX1) == doctest::Approx(ref).epsilon(1e-6));

    const auto u = TargetDensity::uniform(Curve::constant(1.0), XLaw::point({0.5}));
    CHECK_THROWS_AS(u.grad_log_pdf_sup(0.1, 0.2, kX1), Error);
}

TEST_CASE("parameter constraints") {
    CHECK_THROWS_AS(TargetDensity::exponential(Curve::constant(-1.0), XLaw::unit_cube(1)), Error);
    CHECK_THROWS_AS(TargetDensity::exponential(Curve::affine(-0.5, {1.0}), XLaw::unit_cube(1)), Error);
    CHECK_THROWS_AS(TargetDensity::student_t(Curve::constant(0.0), Curve::constant(1.0), 2.0, XLaw::unit_cube(1)),
                    Error);
    CHECK_THROWS_AS(TargetDensity::uniform(Curve::constant(0.0), XLaw::unit_cube(1)), Error);
}

TEST_CASE("json round trip") {
    const auto t = TargetDensity::exponential(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
    const auto back = TargetDensity::from_json(t.to_json());
    const std::vector<double> x{0.4};
    CHECK(back.pdf(0.7, x) == t.pdf(0.7, x));
    CHECK_THROWS_AS(TargetDensity::from_json(nlohmann::json{{"family", "nope"}}), Error);
}

TEST_CASE("assumption check") {
    AssumptionCheckOptions opt;
    opt.n = 100000;
    opt.seed = 11;

    SUBCASE("exponential modulus integral bounded by the mean rate") {
        const auto e = TargetDensity::exponential(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        const auto rep = check_assumption1(e, opt);
        CHECK(rep.modulus_integral.value <= 1.5 + 3.0 * rep.modulus_integral.std_error);
    }
    SUBCASE("laplace second moment") {
        const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::unit_cube(1));
        const auto rep = check_assumption1(l, opt);
        CHECK(std::abs(rep.second_moment.value - 2.0) <= 3.0 * rep.second_moment.std_error);
    }
    SUBCASE("uniform with a tail region is flagged") {
        const auto u = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        opt.policy = RPolicy::Centered;
        opt.partitions.push_back(FineBlock{0.0, 0.5, false, true});
        const auto rep = check_assumption1(u, opt);
        CHECK(rep.cube_condition_violated);
        CHECK(rep.status == AssumptionReport::Status::Flagged);
    }
}
