#include "oracles.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/mixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace smoothmix;

namespace {

std::vector<std::vector<double>> random_xs(double lo, double hi, std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<std::vector<double>> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back({u(gen)});
    return xs;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("M0 weights") {
    const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
    const auto s = default_schedule(ModelKind::M0, t, 4);
    const auto model = build_m0(t, grid_partition(t, 4), s);
    const std::vector<double> x{0.5};
    const auto w = model.mixing_weights(x);
    REQUIRE(w.size() == 5);
    const double h = std::log(4.0) / 4.0;
    CHECK(w[0] == doctest::Approx(1.0 - std::exp(-h)));
    CHECK(w[0] == doctest::Approx(1.0 - std::pow(4.0, -0.25)));
    CHECK(sum(w) == doctest::Approx(1.0).epsilon(1e-12));

    const auto tx = TargetDensity::exponential(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
    const auto mx = build_default(ModelKind::M0, tx, 64);
    for (const auto& xi : random_xs(0.0, 1.0, 100, 1)) CHECK(std::abs(sum(mx.mixing_weights(xi)) - 1.0) < 1e-12);
}

TEST_CASE("M0 on a bounded interval has exactly m components") {
    const auto t = TargetDensity::uniform(Curve::constant(1.0), XLaw::point({0.5}));
    const auto model = build_default(ModelKind::M0, t, 16);
    CHECK_FALSE(model.has_tail());
    CHECK(model.component_count() == 16);
}

TEST_CASE("M0 approaches the target pointwise") {
    const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({1.0}));
    const auto model = build_default(ModelKind::M0, t, 256);
    const std::vector<double> x{1.0};
    CHECK(std::abs(model.density(0.5, x) / std::exp(-0.5) - 1.0) < 0.1);
}

TEST_CASE("M1") {
    SUBCASE("x-free target reduces to M0") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::unit_cube(1));
        const auto m1 = build_default(ModelKind::M1, t, 16);
        const auto m0 = build_default(ModelKind::M0, t, 16);
        CHECK(m1.fit_degree() == 0);
        CHECK(m1.achieved_eps() == 0.0);
        const std::vector<double> x{0.3};
        const auto a = m1.mixing_weights(x);
        const auto b = m0.mixing_weights(x);
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-14));
    }
    SUBCASE("softmax weights stay within exp(2 eps) of the cell masses") {
        const auto t = TargetDensity::exponential(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        const std::size_t m = 8;
        BuildOptions bo;
        bo.eps_target = 1e-3;
        const auto model = build_default(ModelKind::M1, t, m, bo);
        const double eps = model.achieved_eps();
        CHECK(eps <= 1e-3);

        // Independent check of the achieved error on a 4x denser grid.
        const auto part = grid_partition(t, m);
        double worst = 0.0;
        for (std::size_t i = 0; i <= 1024; ++i) {
            const std::vector<double> x{1.0 + static_cast<double>(i) / 1024.0};
            for (std::size_t j = 0; j < m; ++j)
                worst = std::max(worst, std::abs(model.fits()[j](x) - std::log(t.cell_prob(part.lo(j), part.hi(j), x))));
        }
        CHECK(worst <= 1e-3);

        for (const auto& x : random_xs(1.0, 2.0, 100, 2)) {
            const auto w = model.mixing_weights(x);
            CHECK(std::abs(sum(w) - 1.0) < 1e-12);
            for (std::size_t j = 0; j < m; ++j) {
                CHECK(w[j] > 0.0);
                const double ratio = w[j] / t.cell_prob(part.lo(j), part.hi(j), x);
                CHECK(ratio >= std::exp(-2.0 * eps) * (1.0 - 1e-12));
                CHECK(ratio <= std::exp(2.0 * eps) * (1.0 + 1e-12));
            }
        }
    }
    SUBCASE("unreachable tolerance") {
        const auto t = TargetDensity::exponential(Curve::exp_affine(0.0, {3.0}), XLaw::unit_cube(1));
        BuildOptions bo;
        bo.eps_target = 1e-14;
        bo.degree_cap = 2;
        CHECK_THROWS_AS(build_default(ModelKind::M1, t, 8, bo), Error);
    }
}

TEST_CASE("M3") {
    const auto t = TargetDensity::exponential(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
    SUBCASE("single covariate cell gives the cell masses") {
        Schedule s = default_schedule(ModelKind::M3, t, 16);
        s.k = 1;
        s.s = 1.0;
        s.R = 1.0;
        const auto part = grid_partition(t, 16);
        const auto model = build_m3(t, part, XGrid(1, 1), s);
        // The single cell is evaluated at its center whatever x is.
        const std::vector<double> center{0.5};
        for (double xv : {0.0, 0.37, 1.0}) {
            const auto w = model.mixing_weights(std::vector<double>{xv});
            for (std::size_t j = 0; j < 16; ++j)
                CHECK(w[j] == doctest::Approx(t.cell_prob(part.lo(j), part.hi(j), center)).epsilon(1e-12));
        }
    }
    SUBCASE("mass concentrates on the covariate cell") {
        const auto s = default_schedule(ModelKind::M3, t, 16);
        REQUIRE(*s.k == 4);
        const auto model = build_m3(t, grid_partition(t, 16), XGrid(1, 4), s);
        CHECK(model.component_count() == 16 * 4 + 1);
        const std::vector<double> x{0.125};
        const auto mass = model.x_cell_mass(x);
        CHECK(mass[0] >= 1.0 - 4.0 * std::exp(-16.0));
        CHECK(std::abs(sum(model.mixing_weights(x)) - 1.0) < 1e-12);
    }
}

TEST_CASE("M4") {
    SUBCASE("uniform means and scales") {
        const auto t = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        const auto model = build_default(ModelKind::M4, t, 4);
        for (double xv : {1.0, 1.3, 2.0}) {
            const std::vector<double> x{xv};
            const auto c = model.components(x);
            CHECK(c[1].mean == doctest::Approx(0.375 * xv));
            CHECK(c[1].sigma == doctest::Approx(xv * std::pow(0.25, 0.25)));
        }
    }
    SUBCASE("weights do not depend on x") {
        const auto t = TargetDensity::laplace(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
        const auto model = build_default(ModelKind::M4, t, 16);
        const auto ref = model.mixing_weights(std::vector<double>{0.1});
        for (const auto& x : random_xs(0.0, 1.0, 100, 3)) CHECK(model.mixing_weights(x) == ref);
    }
    SUBCASE("laplace fine block mass") {
        const auto t = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
        const auto model = build_default(ModelKind::M4, t, 4);
        const double p = 1.0 / (4.0 + std::pow(4.0, 0.25));
        const auto w = model.mixing_weights(std::vector<double>{0.5});
        REQUIRE(w.size() == 5);
        CHECK(w[0] + w[1] + w[2] + w[3] == doctest::Approx(4.0 * p).epsilon(1e-12));
        CHECK(w[4] == doctest::Approx(1.0 - 4.0 * p).epsilon(1e-12));
    }
}

TEST_CASE("M5") {
    SUBCASE("x-free target matches M4") {
        const auto t = TargetDensity::bounded_smooth(Curve::constant(0.5), XLaw::unit_cube(1));
        const Schedule s5 = default_schedule(ModelKind::M5, t, 10);
        Schedule s4 = s5;
        s4.kind = ModelKind::M4;
        const auto m5 = build_m5(t, 10, s5);
        const auto m4 = build_m4(t, 10, s4);
        CHECK(m5.fit_degree() == 0);
        CHECK(m5.achieved_eps() == 0.0);
        const std::vector<double> x{0.4};
        for (double y : {0.05, 0.5, 0.93}) CHECK(m5.density(y, x) == doctest::Approx(m4.density(y, x)).epsilon(1e-13));
    }
    SUBCASE("linear quantiles are fitted exactly") {
        const auto t = TargetDensity::uniform(Curve::linear({1.0}), XLaw::uniform({1.0}, {2.0}));
        const auto model = build_default(ModelKind::M5, t, 8);
        CHECK(model.fit_degree() <= 1);
        CHECK(model.achieved_eps() <= 1e-12);
    }
    SUBCASE("fitted means stay inside their quantile cells") {
        const auto t = TargetDensity::bounded_smooth(Curve::affine(-1.0, {2.0}), XLaw::unit_cube(1));
        REQUIRE(t.density_sup().has_value());
        CHECK(*t.density_sup() == doctest::Approx(2.0));
        const auto model = build_default(ModelKind::M5, t, 10);
        CHECK(model.eps_target() == doctest::Approx(0.025));
        CHECK(model.achieved_eps() < 0.025);
        for (const auto& x : random_xs(0.0, 1.0, 200, 4)) {
            const auto c = model.components(x);
            auto cut = [&](std::size_t j) { return j == 0 ? 0.0 : j == 10 ? 1.0 : t.quantile(0.1 * static_cast<double>(j), x); };
            for (std::size_t j = 0; j < 10; ++j) {
                CHECK(c[j].mean > cut(j));
                CHECK(c[j].mean < cut(j + 1));
            }
        }
    }
}

TEST_CASE("fixed and exact models") {
    const auto one = MixtureModel::fixed({Component{1.0, 0.0, 1.0}});
    const std::vector<double> x{0.5};
    CHECK(one.density(0.0, x) == doctest::Approx(0.398942).epsilon(1e-6));

    const auto t = TargetDensity::laplace(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
    const auto ex = MixtureModel::exact(t);
    for (double y : {-3.0, 0.0, 0.7}) CHECK(ex.density(y, x) == t.pdf(y, x));
}

TEST_CASE("built models integrate to one") {
    const std::vector<TargetDensity> ts{
        TargetDensity::exponential(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1)),
        TargetDensity::laplace(Curve::affine(1.0, {0.5}), XLaw::unit_cube(1)),
    };
    for (const auto& t : ts) {
        for (auto kind : {ModelKind::M0, ModelKind::M1, ModelKind::M3, ModelKind::M4}) {
            const auto model = build_default(kind, t, 64);
            for (const auto& x : random_xs(0.0, 1.0, 3, 5)) {
                const double mass = oracle::trapezoid([&](double y) { return model.density(y, x); }, -60.0, 60.0, 240000);
                CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
}
