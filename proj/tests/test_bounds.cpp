#include "oracles.hpp"

#include "smoothmix/bounds.hpp"
#include "smoothmix/error.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace smoothmix;

TEST_CASE("closed-form terms") {
    CHECK(riemann_term(1, 0.767, 0.347, 0.589) == doctest::Approx(1.409).epsilon(1e-3));
    CHECK(riemann_term(1, 0.767, 0.347, 0.589) == doctest::Approx(6.0 * 0.347 / (std::sqrt(2.0 * M_PI) * 0.589)));
    CHECK(gaussian_tail_term(4.0, 1.0) == doctest::Approx(2.0 * std::exp(-2.0)));
    CHECK(gaussian_tail_term(std::sqrt(4.0 * std::log(16.0)), 1.0) == doctest::Approx(0.5));

    const double logit = logit_term(1, 256.0, 1.0 / 16.0);
    CHECK(logit == doctest::Approx(std::log(1.0 - 4.0 * std::exp(-16.0))).epsilon(1e-9));
    CHECK(logit == doctest::Approx(-4.5e-7).epsilon(0.01));
    CHECK(std::isfinite(logit_term(1, 3.0, 1.0)));
}

TEST_CASE("corollary1_bound") {
    const auto e = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
    SUBCASE("part II breakdown") {
        const std::size_t m = 256;
        const auto s = default_schedule(ModelKind::M0, e, m);
        const auto b = corollary1_bound(e, s, m, 3.0, BoundVariant::PartII, {20000, 3});
        const double h = s.h.factor, sigma = s.sigma.factor, delta = s.delta.factor;
        CHECK(b.term("riemann").value == doctest::Approx(6.0 * h / (std::sqrt(2.0 * M_PI) * sigma)));
        CHECK(b.term("gaussian_tail").value == doctest::Approx(2.0 * std::exp(-std::pow(delta / sigma, 2) / 8.0)));
        // The exponential log-gradient is the rate, so the local term is delta/2 exactly.
        CHECK(b.term("local_modulus").value == doctest::Approx(delta / 2.0));
        double sum = 0.0;
        for (const auto& t : b.terms) sum += std::abs(t.value);
        CHECK(b.total == doctest::Approx(sum));
    }
    SUBCASE("variant preconditions") {
        const auto s = default_schedule(ModelKind::M0, e, 64);
        CHECK_THROWS_AS(corollary1_bound(e, s, 64, 3.0, BoundVariant::PartI), Error);
        const auto u = TargetDensity::uniform(Curve::constant(1.0), XLaw::point({0.5}));
        CHECK_THROWS_AS(corollary1_bound(u, default_schedule(ModelKind::M0, u, 64), 64, 3.0, BoundVariant::PartII),
                        Error);
    }
    SUBCASE("laplace tail terms shrink with m") {
        const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
        double prev_g = INFINITY, prev_q = INFINITY;
        for (std::size_t m : {64, 256, 1024}) {
            const auto b = corollary1_bound(l, default_schedule(ModelKind::M0, l, m), m, 3.0, BoundVariant::PartII,
                                            {200000, 5});
            CHECK(b.term("tail_gradient").value < prev_g);
            CHECK(b.term("tail_quadratic").value < prev_q);
            prev_g = b.term("tail_gradient").value;
            prev_q = b.term("tail_quadratic").value;
        }
    }
}

TEST_CASE("covariate-grid bound reduces to the grid bound for an x-free target") {
    const auto t = TargetDensity::laplace(Curve::constant(1.0), XLaw::unit_cube(1));
    const std::size_t m = 64;
    const auto s = default_schedule(ModelKind::M3, t, m);
    const XGrid g(1, *s.k);
    const BoundOptions bo{50000, 2};
    const auto b3 = corollary3_bound(t, s, m, g, 3.0, bo);
    const auto b1 = corollary1_bound(t, s, m, 3.0, BoundVariant::PartII, bo);
    const double delta = s.delta.factor;
    const double factor = (delta / 2.0) / (delta / 2.0 + std::sqrt(g.squared_diagonal()));
    CHECK(b3.term("local_modulus").value * factor == doctest::Approx(b1.term("local_modulus").value).epsilon(1e-9));
    CHECK(b3.term("tail_gradient").value == doctest::Approx(b1.term("tail_gradient").value).epsilon(1e-12));
    CHECK(b3.term("logit").value < 0.0);
}

TEST_CASE("corollary6_bound") {
    SUBCASE("exponential closed-form terms") {
        const auto e = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const auto s = default_schedule(ModelKind::M4, e, 16);
        const auto b = corollary6_bound(e, s, 16, {10000, 1});
        CHECK(b.term("riemann").value ==
              doctest::Approx(6.0 * s.h.factor / (std::sqrt(2.0 * M_PI) * s.sigma.factor)));
    }
    SUBCASE("x-dependent schedule is rejected") {
        const auto u = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        try {
            corollary6_bound(u, default_schedule(ModelKind::M4, u, 16), 16);
            FAIL("expected an error");
        } catch (const Error& err) {
            CHECK(err.code() == ErrorCode::XDependentSchedule);
        }
    }
    SUBCASE("laplace tail terms decay at least like m^-1/4") {
        const auto l = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
        const std::vector<std::size_t> grid{64, 256, 1024};
        double c = 0.0;
        for (auto m : grid) {
            const auto b = corollary6_bound(l, default_schedule(ModelKind::M4, l, m), m, {100000, 4});
            const double tail = b.term("tail_gradient").value + b.term("tail_quadratic").value;
            const double se = std::hypot(b.term("tail_gradient").std_error, b.term("tail_quadratic").std_error);
            if (m == grid.front()) c = tail * std::pow(64.0, 0.25);
            CHECK(tail <= c * std::pow(static_cast<double>(m), -0.25) + 3.0 * se);
        }
    }
}

TEST_CASE("rate exponents") {
    CHECK(rate_exponent(RateModel::M0, 1, 1, 3.0, 0.001) == doctest::Approx(1.0 / 3.001));
    CHECK(rate_exponent(RateModel::M0, 1, 1, 3.0, 0.001) == doctest::Approx(0.333222).epsilon(1e-6));
    CHECK(rate_exponent(RateModel::M3, 1, 1, 3.0, 0.001) == doctest::Approx(1.0 / 4.001));
    CHECK(rate_exponent(RateModel::M4Laplace, 1, 1, 3.0, 0.1) == doctest::Approx(1.0 / 3.1));
    CHECK(rate_exponent(RateModel::M0Laplace, 1, 1, 3.0, 0.1) == doctest::Approx(1.0 / 2.1));
    CHECK_THROWS_AS(rate_exponent(RateModel::M0, 1, 1, 2.0, 0.1), Error);
    CHECK(rate_model_from_string(to_string(RateModel::M4Laplace)) == RateModel::M4Laplace);
}

TEST_CASE("rate fits") {
    auto series = [](auto value) {
        std::vector<SeriesPoint> s;
        for (std::size_t m : {16, 64, 256, 1024}) {
            SeriesPoint p;
            p.m = m;
            p.estimate.value = value(static_cast<double>(m));
            p.estimate.std_error = 1e-9;
            s.push_back(p);
        }
        return s;
    };
    CHECK(fit_rate(series([](double m) { return std::pow(m, -0.5); })).slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(std::abs(fit_rate(series([](double) { return 0.3; })).slope) < 1e-12);

    auto noisy = series([](double m) { return 1.0 / m; });
    noisy[3].estimate.std_error = 1.0;  // within 3 SE of zero, dropped
    const auto fit = fit_rate(noisy);
    CHECK(fit.used == 3);
    CHECK(fit.excluded == 1);
    noisy[2].estimate.std_error = 1.0;
    CHECK_THROWS_AS(fit_rate(noisy), Error);
}

TEST_CASE("lemma1_gap") {
    SUBCASE("d = 1 against direct enumeration") {
        const double delta = 1.0, h = 0.01, sigma = 0.3;
        double lhs = 0.0;
        for (int k = 0; k < 100; ++k) lhs += h * oracle::std_normal_pdf((k + 0.5) * h / sigma) / sigma;
        const double rhs = oracle::normal_prob(0.0, delta, 0.0, sigma) - 3.0 * h / (std::sqrt(2.0 * M_PI) * sigma);
        const auto g = lemma1_gap(1, delta, h, sigma);
        CHECK(g.lhs == doctest::Approx(lhs).epsilon(1e-12));
        CHECK(g.rhs == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(g.margin >= 0.0);
    }
    SUBCASE("largest admissible cell side") {
        const double delta = 1.0;
        CHECK(lemma1_gap(1, delta, delta / 3.0 * 0.999, 0.3).margin >= 0.0);
        CHECK(lemma1_gap(2, delta, delta / (3.0 * std::sqrt(2.0)) * 0.999, 0.3).margin >= 0.0);
        CHECK_THROWS_AS(lemma1_gap(1, delta, delta / 3.0 * 1.001, 0.3), Error);
    }
    SUBCASE("d = 2 against a product of axis sums") {
        const double delta = 1.0, h = 0.05, sigma = 0.4;
        double axis = 0.0;
        for (int k = 0; k < 20; ++k) axis += h * oracle::std_normal_pdf((k + 0.5) * h / sigma) / sigma;
        const auto g = lemma1_gap(2, delta, h, sigma);
        CHECK(g.lhs == doctest::Approx(axis * axis).epsilon(1e-12));
        CHECK(g.margin >= 0.0);
    }
}

TEST_CASE("lemma2_gap") {
    const auto g = lemma2_gap(1, 4.0, 1.0);
    CHECK(g.lhs == doctest::Approx(std::erf(std::sqrt(2.0))));
    CHECK(g.lhs == doctest::Approx(0.954500).epsilon(1e-6));
    CHECK(g.rhs == doctest::Approx(1.0 - 2.0 / std::sqrt(2.0 * M_PI) * std::exp(-2.0)));
    CHECK(g.margin == doctest::Approx(0.0625).epsilon(0.01));

    const auto wide = lemma2_gap(3, 20.0, 1.0);
    CHECK(wide.lhs <= 1.0);
    CHECK(wide.margin >= 0.0);

    const auto narrow = lemma2_gap(1, 1.0, 1.0);
    CHECK(narrow.rhs == doctest::Approx(1.0 - 8.0 / std::sqrt(2.0 * M_PI) * std::exp(-1.0 / 8.0)));
    CHECK(narrow.rhs == doctest::Approx(-1.816).epsilon(1e-3));
    CHECK(narrow.lhs == doctest::Approx(0.3829).epsilon(1e-3));
    CHECK(narrow.margin > 0.0);
}

TEST_CASE("lemma3_gap") {
    const double h = 0.01, delta = 1.0, sigma = 0.25;
    std::vector<double> edges;
    for (int k = -60; k <= 60; ++k) edges.push_back(k * h);
    std::vector<double> centers, far;
    for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
        centers.push_back(0.5 * (edges[j] + edges[j + 1]));
        far.push_back(edges[j] >= 0.0 ? edges[j + 1] : edges[j]);
    }
    const auto two = lemma3_gap(edges, centers, 0.0, delta, sigma, CubeSide::TwoSided);
    CHECK(two.margin >= 0.0);
    CHECK(lemma3_gap(edges, far, 0.0, delta, sigma, CubeSide::TwoSided).margin >= 0.0);
    const auto right = lemma3_gap(edges, centers, 0.0, delta, sigma, CubeSide::Right);
    CHECK(right.rhs == doctest::Approx(0.5 * two.rhs));
    CHECK(right.margin >= 0.0);

    auto bad = centers;
    bad[3] = edges[5];
    CHECK_THROWS_AS(lemma3_gap(edges, bad, 0.0, delta, sigma, CubeSide::TwoSided), Error);
}

TEST_CASE("lemma sweep") {
    const auto a = sweep_lemmas(200, 1, 1);
    const auto b = sweep_lemmas(200, 1, 3);
    CHECK(a.rows.size() == 600);
    CHECK(a.violations == 0);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].gap.margin == b.rows[i].gap.margin);
    CHECK_THROWS_AS(sweep_lemmas(0, 1), Error);
}
