#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twinwatch/errors.hpp"
#include "twinwatch/trace.hpp"

#include <random>

using namespace twinwatch;

namespace {

Trace make_trace(std::initializer_list<double> t, std::initializer_list<double> v) {
    Trace tr;
    tr.t = Eigen::ArrayXd(static_cast<Eigen::Index>(t.size()));
    tr.v = Eigen::ArrayXd(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : t) tr.t[i++] = x;
    i = 0;
    for (double x : v) tr.v[i++] = x;
    return tr;
}

} // namespace

TEST_CASE("resample at original times is the identity") {
    const Trace tr = make_trace({0.0, 0.5, 1.0, 2.0}, {1.0, -2.0, 4.0, 0.5});
    const Trace back = resample(tr, tr.t);
    CHECK((back.v == tr.v).all());
}

TEST_CASE("resample midpoint") {
    const Trace tr = make_trace({0.0, 1.0}, {0.0, 2.0});
    Eigen::ArrayXd target(1);
    target << 0.5;
    CHECK(resample(tr, target).v[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("piecewise-linear trace resampled to any grid reproduces node values") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> uv(-5.0, 5.0);
    Trace tr;
    tr.t = Eigen::ArrayXd::LinSpaced(40, 0.0, 3.9);
    tr.v.resize(40);
    for (Eigen::Index i = 0; i < 40; ++i) tr.v[i] = uv(rng);

    // refine onto a finer grid, then evaluate back at the original nodes
    Eigen::ArrayXd fine = Eigen::ArrayXd::LinSpaced(301, 0.0, 3.9);
    const Trace refined = resample(tr, fine);
    const Trace back = resample(refined, tr.t);
    for (Eigen::Index i = 0; i < tr.size(); ++i)
        CHECK(back.v[i] == doctest::Approx(tr.v[i]).epsilon(1e-12));
}

TEST_CASE("no extrapolation of measured data") {
    const Trace tr = make_trace({0.0, 1.0}, {0.0, 2.0});
    Eigen::ArrayXd before(1), after(1);
    before << -0.1;
    after << 1.1;
    CHECK_THROWS_AS(resample(tr, before), ExtrapolationError);
    CHECK_THROWS_AS(resample(tr, after), ExtrapolationError);
}

TEST_CASE("trace validation rejects bad series") {
    Trace tr = make_trace({0.0, 0.0}, {1.0, 2.0});
    CHECK_THROWS_AS(validate(tr), DomainError);
    tr = make_trace({0.0, 1.0}, {1.0, 2.0});
    CHECK_NOTHROW(validate(tr));
    tr.v[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate(tr), DomainError);
}

TEST_CASE("uniform grid detection") {
    CHECK(is_uniform_grid(Eigen::ArrayXd::LinSpaced(11, 0.0, 1.0)));
    Eigen::ArrayXd t(3);
    t << 0.0, 0.1, 0.3;
    CHECK_FALSE(is_uniform_grid(t));
}
