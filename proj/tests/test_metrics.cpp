#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twinwatch/errors.hpp"
#include "twinwatch/metrics.hpp"
#include "twinwatch/replication.hpp"

#include "support/brute_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace twinwatch;

namespace {

Eigen::ArrayXd arr(std::initializer_list<double> values) {
    Eigen::ArrayXd a(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) a[i++] = v;
    return a;
}

} // namespace

TEST_CASE("rmse worked examples") {
    CHECK(rmse(arr({1, 2, 3}), arr({1, 2, 3})).value == 0.0);
    CHECK(rmse(arr({1, 2, 3}), arr({2, 3, 4})).value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rmse(arr({0, 0}), arr({3, 4})).value == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
    CHECK_THROWS_AS(rmse(arr({1, 2}), arr({1})), AlignmentError);
}

TEST_CASE("pointwise normalized distance and exclusions") {
    const MetricConfig cfg;
    SUBCASE("direct arithmetic") {
        const NedPointwise ned = ned_pointwise(arr({2}), arr({0.5}), arr({3}), cfg);
        CHECK(ned.d[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(ned.included[0]);
    }
    SUBCASE("zero sigma excludes the sample") {
        const NedPointwise ned = ned_pointwise(arr({2, 2}), arr({0.0, 0.5}), arr({3, 3}), cfg);
        CHECK_FALSE(ned.included[0]);
        CHECK(ned.included[1]);
    }
    SUBCASE("identical traces give zero distances") {
        const NedPointwise ned = ned_pointwise(arr({1, 2, 3}), arr({1, 1, 1}), arr({1, 2, 3}), cfg);
        CHECK((ned.d == 0.0).all());
    }
    SUBCASE("everything excluded is degenerate") {
        CHECK_THROWS_AS(ned_pointwise(arr({1, 2}), arr({0.0, 0.0}), arr({1, 2}), cfg), DegenerateDataError);
    }
}

TEST_CASE("mean and total normalized distance") {
    const MetricConfig cfg;
    SUBCASE("mean of [2, 4] is 3") {
        const NedPointwise ned = ned_pointwise(arr({2, 4}), arr({1, 1}), arr({0, 0}), cfg);
        CHECK(mean_ned(ned).value == doctest::Approx(3.0).epsilon(1e-15));
    }
    SUBCASE("exclusion changes the mean") {
        // d = [1, 2, 6] with the middle sample excluded -> mean 3.5
        const NedPointwise ned = ned_pointwise(arr({1, 2, 6}), arr({1, 0, 1}), arr({0, 0, 0}), cfg);
        const MetricResult r = mean_ned(ned);
        CHECK(r.value == doctest::Approx(3.5).epsilon(1e-15));
        CHECK(r.included == 2);
        CHECK(r.excluded == 1);
    }
    SUBCASE("total ned worked example") {
        const NedPointwise ned = ned_pointwise(arr({3, 4}), arr({1, 1}), arr({0, 0}), cfg);
        CHECK(total_ned(ned).value == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
    }
    SUBCASE("single included distance is its own total") {
        const NedPointwise ned = ned_pointwise(arr({5, 1}), arr({1, 0}), arr({0, 1}), cfg);
        CHECK(total_ned(ned).value == doctest::Approx(5.0).epsilon(1e-15));
    }
    SUBCASE("total equals mean when all included distances are equal") {
        const NedPointwise ned = ned_pointwise(arr({2, 2, 2}), arr({1, 1, 1}), arr({0, 0, 0}), cfg);
        CHECK(total_ned(ned).value == doctest::Approx(mean_ned(ned).value).epsilon(1e-15));
    }
}

TEST_CASE("relative error metrics") {
    const MetricConfig cfg;
    const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(3, 0.0, 0.02);
    SUBCASE("identical traces") {
        CHECK(avg_rel_err(arr({1, 2, 3}), arr({1, 2, 3}), times, cfg).value == 0.0);
        CHECK(max_rel_err(arr({1, 2, 3}), arr({1, 2, 3}), cfg).value == 0.0);
    }
    SUBCASE("constant relative deviation") {
        const Eigen::ArrayXd p = arr({1, 2, 4});
        const Eigen::ArrayXd d = 1.1 * p;
        CHECK(avg_rel_err(p, d, times, cfg).value == doctest::Approx(0.1).epsilon(1e-12));
    }
    SUBCASE("near-zero means are excluded") {
        const MetricResult r = avg_rel_err(arr({1, 1e-9, 2}), arr({1.2, 5, 2.2}), times, cfg);
        CHECK(r.value == doctest::Approx(0.15).epsilon(1e-12));
        CHECK(r.included == 2);
        CHECK(r.excluded == 1);
    }
    SUBCASE("max takes the worst included ratio") {
        CHECK(max_rel_err(arr({1, 2}), arr({1.2, 2.2}), cfg).value == doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("an excluded huge ratio leaves the max unchanged") {
        const double without = max_rel_err(arr({1, 2}), arr({1.2, 2.2}), cfg).value;
        const double with_node = max_rel_err(arr({1, 1e-9, 2}), arr({1.2, 99, 2.2}), cfg).value;
        CHECK(with_node == without);
    }
    SUBCASE("non-uniform grids are rejected") {
        Eigen::ArrayXd bad(3);
        bad << 0.0, 0.01, 0.05;
        CHECK_THROWS_AS(avg_rel_err(arr({1, 2, 3}), arr({1, 2, 3}), bad, cfg), AlignmentError);
    }
    SUBCASE("everything excluded is degenerate") {
        CHECK_THROWS_AS(avg_rel_err(arr({0, 0}), arr({1, 1}), Eigen::ArrayXd::LinSpaced(2, 0, 1), cfg),
                        DegenerateDataError);
        CHECK_THROWS_AS(max_rel_err(arr({0, 0}), arr({1, 1}), cfg), DegenerateDataError);
    }
}

TEST_CASE("compute_all emits all five metrics and matches the individual operations") {
    ReplicationSummary summary;
    summary.run_id = 1;
    summary.quantity = Quantity::velocity;
    summary.t = Eigen::ArrayXd::LinSpaced(50, 0.0, 0.49);
    summary.mean = Eigen::ArrayXd::LinSpaced(50, 0.1, 1.0);
    summary.std = Eigen::ArrayXd::Constant(50, 0.05);
    summary.replications = 10;

    Trace measured;
    measured.t = summary.t;
    measured.v = summary.mean + 0.02;

    const MetricConfig cfg;
    const auto results = compute_all(summary, measured, cfg);
    CHECK(results.size() == 5);
    for (const auto& r : results) {
        CHECK(r.run_id == 1);
        CHECK(r.quantity == Quantity::velocity);
        CHECK(r.included + r.excluded == 50);
        CHECK(r.included >= 1);
        CHECK(std::isfinite(r.value));
        CHECK(r.value >= 0.0);
    }

    const NedPointwise ned = ned_pointwise(summary.mean, *summary.std, measured.v, cfg);
    CHECK(results[0].value == rmse(summary.mean, measured.v).value);
    CHECK(results[1].value == mean_ned(ned).value);
    CHECK(results[2].value == total_ned(ned).value);
    CHECK(results[3].value == avg_rel_err(summary.mean, measured.v, summary.t, cfg).value);
    CHECK(results[4].value == max_rel_err(summary.mean, measured.v, cfg).value);
}

TEST_CASE("compute_all: measured equals mean gives five zeros") {
    ReplicationSummary summary;
    summary.t = Eigen::ArrayXd::LinSpaced(10, 0.0, 0.09);
    summary.mean = Eigen::ArrayXd::Constant(10, 2.0);
    summary.std = Eigen::ArrayXd::Constant(10, 0.1);
    summary.replications = 5;
    Trace measured;
    measured.t = summary.t;
    measured.v = summary.mean;
    const auto results = compute_all(summary, measured, MetricConfig{});
    CHECK(results.size() == 5);
    for (const auto& r : results) CHECK(r.value == 0.0);
}

TEST_CASE("compute_all omits degenerate metrics instead of reporting zero") {
    ReplicationSummary summary;
    summary.t = Eigen::ArrayXd::LinSpaced(4, 0.0, 0.03);
    summary.mean = Eigen::ArrayXd::Zero(4); // relative errors all excluded
    summary.std = Eigen::ArrayXd::Zero(4);  // distances all excluded
    summary.replications = 5;
    Trace measured;
    measured.t = summary.t;
    measured.v = Eigen::ArrayXd::Constant(4, 1.0);
    const auto results = compute_all(summary, measured, MetricConfig{});
    CHECK(results.size() == 1); // only rmse survives
    CHECK(results[0].metric == Metric::rmse);
}

TEST_CASE("compute_all without a std omits the normalized-distance metrics") {
    ReplicationSummary summary;
    summary.t = Eigen::ArrayXd::LinSpaced(4, 0.0, 0.03);
    summary.mean = Eigen::ArrayXd::Constant(4, 1.0);
    summary.replications = 1;
    Trace measured;
    measured.t = summary.t;
    measured.v = Eigen::ArrayXd::Constant(4, 1.1);
    const auto results = compute_all(summary, measured, MetricConfig{});
    CHECK(results.size() == 3);
    for (const auto& r : results) CHECK((r.metric != Metric::mean_ned && r.metric != Metric::total_ned));
}

TEST_CASE("metric properties on randomized traces") {
    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> ulen(10, 200);
    std::uniform_real_distribution<double> uval(-3.0, 3.0);
    std::uniform_real_distribution<double> usig(0.01, 1.0);
    std::uniform_real_distribution<double> uscale(0.1, 10.0);
    const MetricConfig cfg;

    for (int it = 0; it < 50; ++it) {
        const int n = ulen(rng);
        Eigen::ArrayXd p(n), d(n), s(n);
        for (int i = 0; i < n; ++i) {
            p[i] = uval(rng) + 5.0; // bounded away from zero
            d[i] = uval(rng) + 5.0;
            s[i] = usig(rng);
        }
        const double k = uscale(rng);

        // scale equivariance of rmse; invariance of ned when sigma scales too
        CHECK(rmse(k * p, k * d).value == doctest::Approx(k * rmse(p, d).value).epsilon(1e-12));
        const NedPointwise ned = ned_pointwise(p, s, d, cfg);
        const NedPointwise ned_scaled = ned_pointwise(k * p, k * s, k * d, cfg);
        CHECK(mean_ned(ned_scaled).value == doctest::Approx(mean_ned(ned).value).epsilon(1e-12));
        CHECK(total_ned(ned_scaled).value == doctest::Approx(total_ned(ned).value).epsilon(1e-12));

        // relative errors are scale invariant
        const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(n, 0.0, 0.01 * (n - 1));
        CHECK(avg_rel_err(k * p, k * d, times, cfg).value ==
              doctest::Approx(avg_rel_err(p, d, times, cfg).value).epsilon(1e-12));

        // constant offset: rmse(p, p + b) = |b|
        const double b = uval(rng);
        CHECK(rmse(p, p + b).value == doctest::Approx(std::abs(b)).epsilon(1e-12));

        // total_ned^2 * N_inc equals the sum of squared included distances
        const MetricResult tn = total_ned(ned);
        double sum_sq = 0.0;
        for (int i = 0; i < n; ++i)
            if (ned.included[i]) sum_sq += ned.d[i] * ned.d[i];
        CHECK(tn.value * tn.value * static_cast<double>(tn.included) ==
              doctest::Approx(sum_sq).epsilon(1e-12));

        // max >= avg over the same inclusion set
        CHECK(max_rel_err(p, d, cfg).value >= avg_rel_err(p, d, times, cfg).value - 1e-15);

        // rmse and max_rel_err are insensitive to a shared shuffle of the pairs
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        Eigen::ArrayXd ps(n), ds(n);
        for (int i = 0; i < n; ++i) {
            ps[i] = p[idx[static_cast<std::size_t>(i)]];
            ds[i] = d[idx[static_cast<std::size_t>(i)]];
        }
        CHECK(rmse(ps, ds).value == doctest::Approx(rmse(p, d).value).epsilon(1e-12));
        CHECK(max_rel_err(ps, ds, cfg).value == doctest::Approx(max_rel_err(p, d, cfg).value).epsilon(1e-12));
    }
}

TEST_CASE("exclusion soundness against the brute-force oracle") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uval(-1.0, 1.0);
    std::uniform_real_distribution<double> usig(0.0, 0.5);
    const MetricConfig cfg{0.05, 0.05}; // coarse thresholds exercise both sides

    for (int it = 0; it < 20; ++it) {
        const int n = 60;
        std::vector<double> p(n), d(n), s(n);
        Eigen::ArrayXd pe(n), de(n), se(n);
        for (int i = 0; i < n; ++i) {
            p[i] = pe[i] = uval(rng);
            d[i] = de[i] = uval(rng);
            s[i] = se[i] = usig(rng);
        }
        const brute::Ned oracle = brute::ned_pointwise(p, s, d, cfg.eps_sigma);
        if (oracle.n_included == 0) continue;
        const NedPointwise ned = ned_pointwise(pe, se, de, cfg);
        for (int i = 0; i < n; ++i) {
            CHECK(ned.included[i] == oracle.included[static_cast<std::size_t>(i)]);
            // every excluded sample fails its eps test, every included one passes
            if (ned.included[i])
                CHECK(s[static_cast<std::size_t>(i)] >= cfg.eps_sigma);
            else
                CHECK(s[static_cast<std::size_t>(i)] < cfg.eps_sigma);
        }
        CHECK(mean_ned(ned).value == doctest::Approx(brute::mean_ned(oracle)).epsilon(1e-13));
        CHECK(total_ned(ned).value == doctest::Approx(brute::total_ned(oracle)).epsilon(1e-13));
    }
}
