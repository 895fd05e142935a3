#include "oracles.hpp"

#include "smoothmix/divergence.hpp"
#include "smoothmix/error.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace smoothmix;

namespace {

TargetDensity std_normal_target() {
    CustomCallables fns;
    fns.pdf = [](double y, std::span<const double>) { return oracle::std_normal_pdf(y); };
    fns.cdf = [](double y, std::span<const double>) { return 0.5 * std::erfc(-y / std::sqrt(2.0)); };
    return TargetDensity::custom("normal", fns, SupportSpec::full_space(), XLaw::point({0.0}));
}

}  // namespace

TEST_CASE("exact wrapper has zero divergence") {
    const auto t = TargetDensity::laplace(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
    const auto ex = MixtureModel::exact(t);
    const auto mc = kl_mc(t, ex, 1000, 1);
    CHECK(mc.value == 0.0);
    CHECK(mc.std_error == 0.0);
    CHECK(std::abs(kl_quadrature(t, ex).value) <= 1e-12);
    CHECK_THROWS_AS(kl_mc(t, ex, 99, 1), Error);
}

TEST_CASE("normal versus shifted normal") {
    const auto t = std_normal_target();
    const auto model = MixtureModel::fixed({Component{1.0, 1.0, 1.0}});
    CHECK(kl_quadrature(t, model).value == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("exponential versus a standard normal") {
    const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
    const auto model = MixtureModel::fixed({Component{1.0, 0.0, 1.0}});
    const double ref = oracle::trapezoid(
        [](double y) { return std::exp(-y) * (-y + 0.5 * y * y + 0.5 * std::log(2.0 * M_PI)); }, 0.0, 60.0, 1000000);
    const auto mc = kl_mc(t, model, 1000000, 5);
    CHECK(std::abs(mc.value - ref) <= 3.0 * mc.std_error);
    CHECK(kl_quadrature(t, model).value == doctest::Approx(ref).epsilon(1e-8));
}

TEST_CASE("monte carlo agrees with quadrature") {
    SUBCASE("exponential M0") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const auto model = build_default(ModelKind::M0, t, 1024);
        const auto mc = kl_mc(t, model, 1000000, 7);
        const auto q = kl_quadrature(t, model);
        CHECK(std::abs(mc.value - q.value) <= 3.0 * mc.std_error);
    }
    SUBCASE("laplace M0") {
        const auto t = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
        const auto model = build_default(ModelKind::M0, t, 256);
        const auto mc = kl_mc(t, model, 1000000, 8);
        const auto q = kl_quadrature(t, model);
        CHECK(q.value >= 0.0);
        CHECK(std::abs(mc.value - q.value) <= 3.0 * mc.std_error);
    }
}

TEST_CASE("estimates do not depend on the worker count") {
    const auto t = TargetDensity::exponential(Curve::affine(1.0, {1.0}), XLaw::unit_cube(1));
    const auto model = build_default(ModelKind::M0, t, 64);
    const auto a = kl_mc(t, model, 300000, 3, McOptions{1});
    const auto b = kl_mc(t, model, 300000, 3, McOptions{4});
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
}

TEST_CASE("series") {
    const std::vector<std::size_t> grid{16, 64, 256, 1024};
    SUBCASE("exponential M0 decreases") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const auto s = kl_series(t, [&](std::size_t m) { return build_default(ModelKind::M0, t, m); }, grid, 200000, 7);
        CHECK(s.decreased());
        CHECK(s.increases == 0);
        CHECK(s.pairwise_se.size() == 3);
    }
    SUBCASE("exact wrapper is zero everywhere") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const auto s = kl_series(t, [&](std::size_t) { return MixtureModel::exact(t); }, grid, 1000, 7);
        for (const auto& p : s.points) CHECK(p.estimate.value == 0.0);
    }
    SUBCASE("laplace M4 never rises") {
        const auto t = TargetDensity::laplace(Curve::constant(1.0), XLaw::point({0.5}));
        const auto s = kl_series(t, [&](std::size_t m) { return build_default(ModelKind::M4, t, m); }, grid, 200000, 9);
        CHECK(s.increases == 0);
    }
    SUBCASE("grid must increase") {
        const auto t = TargetDensity::exponential(Curve::constant(1.0), XLaw::point({0.5}));
        const std::vector<std::size_t> bad{64, 16, 256};
        CHECK_THROWS_AS(kl_series(t, [&](std::size_t m) { return build_default(ModelKind::M0, t, m); }, bad, 1000, 1),
                        Error);
    }
}
