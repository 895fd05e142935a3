#include "smoothmix/discretization.hpp"
#include "smoothmix/error.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace smoothmix;

TEST_CASE("half-line grid partition") {
    const auto p = grid_partition(SupportSpec::half_line(), 4);
    const double h = std::log(4.0) / 4.0;
    CHECK(p.size() == 4);
    CHECK(p.side() == doctest::Approx(0.346574).epsilon(1e-6));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(p.lo(j) == doctest::Approx(h * static_cast<double>(j)));
        CHECK(p.hi(j) - p.lo(j) == doctest::Approx(h));
        if (j > 0) CHECK(p.lo(j) == p.hi(j - 1));
    }
    CHECK(p.block_hi() == doctest::Approx(std::log(4.0)));
    CHECK(p.has_tail());
    CHECK(p.in_tail(std::log(4.0) + 1e-9));
    CHECK_FALSE(p.in_tail(std::log(4.0) - 1e-9));
}

TEST_CASE("interval grid partition has no tail") {
    const auto p = grid_partition(SupportSpec::interval(0.0, 1.0), 2);
    CHECK(p.size() == 2);
    CHECK(p.lo(0) == 0.0);
    CHECK(p.hi(0) == doctest::Approx(0.5));
    CHECK(p.hi(1) == doctest::Approx(1.0));
    CHECK_FALSE(p.has_tail());
}

TEST_CASE("two-dimensional grid counts k^d cells") {
    const auto p = grid_partition(SupportSpec::full_space(2), 16);
    CHECK(p.per_axis() == 4);
    CHECK(p.size() == 16);
}

TEST_CASE("equal-probability partitions") {
    const std::vector<double> x{0.5};
    SUBCASE("exponential") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const double p = (2.0 - std::sqrt(2.0)) / 4.0;
        const auto e = epp_partition(t, x, 2, p);
        REQUIRE(e.edges.size() == 3);
        CHECK(e.edges[1] == doctest::Approx(-std::log1p(-p)).epsilon(1e-10));
        CHECK(e.edges[1] == doctest::Approx(0.158347).epsilon(1e-5));
        CHECK(e.edges[2] == doctest::Approx(0.346574).epsilon(1e-5));
        CHECK(e.tail_prob() == doctest::Approx(1.0 - 2.0 * p));
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(t.cell_prob(e.edges[j], e.edges[j + 1], x) == doctest::Approx(p).epsilon(1e-10));
    }
    SUBCASE("uniform") {
        const auto t = TargetDensity::uniform(Curve::constant(1.0), XLaw::point({0.5}));
        const auto e = epp_partition(t, x, 4, 0.25);
        CHECK(e.edges[1] == doctest::Approx(0.25));
        CHECK(e.edges[2] == doctest::Approx(0.5));
        CHECK(e.edges[3] == doctest::Approx(0.75));
        CHECK(e.tail_prob() == doctest::Approx(0.0));
    }
    SUBCASE("laplace cell masses") {
        const auto t = TargetDensity::laplace(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
        const std::size_t m = 32;
        const double p = 1.0 / (m + std::pow(m, 0.25));
        const auto e = epp_partition(t, x, m, p);
        for (std::size_t j = 0; j < m; ++j)
            CHECK(t.cell_prob(e.edges[j], e.edges[j + 1], x) == doctest::Approx(p).epsilon(1e-10));
    }
}

TEST_CASE("covariate grid") {
    const XGrid g(1, 4);
    CHECK(g.size() == 4);
    CHECK(g.squared_diagonal() == doctest::Approx(1.0 / 16.0));
    const double c[] = {0.125, 0.375, 0.625, 0.875};
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.center(i)[0] == doctest::Approx(c[i]));
    const std::vector<double> top{1.0};
    CHECK(g.cell_of(top) == 3);

    const XGrid g2(2, 2);
    CHECK(g2.size() == 4);
    // d_x times the cell volume to the power 2/d_x
    CHECK(g2.squared_diagonal() == doctest::Approx(2.0 * std::pow(0.25, 2.0 / 2.0)));

    const XGrid g1(1, 1);
    CHECK(g1.size() == 1);
    CHECK(g1.center(0)[0] == doctest::Approx(0.5));
}

TEST_CASE("default schedules") {
    SUBCASE("M0 on the half line") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const auto s = default_schedule(ModelKind::M0, t, 4);
        const std::vector<double> x{0.5};
        CHECK(s.h.at(x) == doctest::Approx(0.346574).epsilon(1e-5));
        CHECK(s.sigma.at(x) == doctest::Approx(0.588705).epsilon(1e-5));
        CHECK(s.delta.at(x) == doctest::Approx(0.767271).epsilon(1e-5));
    }
    SUBCASE("M3 covariate grid") {
        const auto t = TargetDensity::exponential(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
        const auto s = default_schedule(ModelKind::M3, t, 16);
        CHECK(*s.k == 4);
        CHECK(*s.s == doctest::Approx(1.0 / 16.0));
        CHECK(*s.R == doctest::Approx(256.0));
    }
    SUBCASE("M4 exponential") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        CHECK(*default_schedule(ModelKind::M4, t, 4).p == doctest::Approx(0.125));
    }
    SUBCASE("M4 uniform depends on x") {
        const auto t = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        CHECK(default_schedule(ModelKind::M4, t, 8).x_dependent());
    }
    SUBCASE("small m rejected") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        CHECK_THROWS_AS(default_schedule(ModelKind::M0, t, 2), Error);
    }
}

TEST_CASE("schedule validation") {
    const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
    SUBCASE("M0 recipe passes") {
        std::vector<Schedule> ss;
        for (std::size_t m : {16, 64, 256, 1024}) ss.push_back(default_schedule(ModelKind::M0, t, m));
        const auto rep = validate_schedule(ss);
        CHECK(rep.ok());
    }
    SUBCASE("constant schedule fails the ratio checks") {
        std::vector<Schedule> ss;
        for (std::size_t m : {16, 64, 256}) {
            Schedule s = default_schedule(ModelKind::M0, t, m);
            s.h = s.sigma = s.delta = XScalar::constant(1.0);
            ss.push_back(s);
        }
        const auto rep = validate_schedule(ss);
        CHECK_FALSE(rep.ok());
        bool sd = false, riem = false;
        for (const auto& r : rep.ratios) {
            if (r.name == "sigma/delta") sd = !r.decreasing;
            if (r.name == "delta^(d-1) h/sigma^d") riem = !r.decreasing;
        }
        CHECK(sd);
        CHECK(riem);
    }
    SUBCASE("M4 uniform sigma0 condition") {
        const auto u = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        std::vector<Schedule> ss;
        for (std::size_t m : {16, 64, 256}) ss.push_back(default_schedule(ModelKind::M4, u, m));
        const std::vector<std::vector<double>> probe{{1.0}, {1.5}, {2.0}};
        const auto rep = validate_schedule(ss, probe);
        CHECK(rep.sigma0_ok);
        // phi(0, 0, sigma_0(x)) r(x) / 2 = 1/(2 b(x)) * b(x)/2, on the limit for every x.
        for (double v : rep.sigma0_condition) CHECK(v == doctest::Approx(0.25));
    }
}
