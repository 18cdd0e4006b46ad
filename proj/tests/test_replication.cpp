#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twinwatch/errors.hpp"
#include "twinwatch/replication.hpp"
#include "twinwatch/trajectory.hpp"

#include <algorithm>
#include <cmath>

using namespace twinwatch;

namespace {

ReplicationPlan make_plan(RunId run_id, int r, std::uint64_t seed) {
    ReplicationPlan plan;
    plan.run_id = run_id;
    plan.replications = r;
    plan.ic_uncertainty = {0.0005, 0.001, 0.000767, 0.0038};
    plan.seed = seed;
    return plan;
}

Trajectory padded_move(const CraneParams& p) {
    Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    traj.run_id = 1;
    return with_settle_tail(traj, 2.0, 0.01);
}

} // namespace

TEST_CASE("R = 1 returns exactly the measured initial state") {
    PlantState initial;
    initial.x_m = 0.1;
    initial.theta_rad = 0.002;
    const auto states = sample_initial_conditions(initial, make_plan(1, 1, 42));
    CHECK(states.size() == 1);
    CHECK(states[0].x_m == initial.x_m);
    CHECK(states[0].theta_rad == initial.theta_rad);
}

TEST_CASE("replication 0 is unperturbed, the rest scatter around the measurement") {
    PlantState initial;
    initial.x_m = 0.3;
    const int r_count = 400;
    const auto states = sample_initial_conditions(initial, make_plan(5, r_count, 42));
    CHECK(states[0].x_m == initial.x_m);
    CHECK(states[0].v_mps == initial.v_mps);

    double mean_x = 0.0;
    for (const auto& s : states) mean_x += s.x_m;
    mean_x /= r_count;
    // statistical oracle: sample mean within 4 sigma / sqrt(R)
    CHECK(std::abs(mean_x - initial.x_m) <= 4.0 * 0.0005 / std::sqrt(static_cast<double>(r_count)));
}

TEST_CASE("initial-condition sampling is deterministic in (seed, run_id)") {
    PlantState initial;
    const auto a = sample_initial_conditions(initial, make_plan(5, 10, 42));
    const auto b = sample_initial_conditions(initial, make_plan(5, 10, 42));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x_m == b[i].x_m);
        CHECK(a[i].omega_radps == b[i].omega_radps);
    }
    const auto c = sample_initial_conditions(initial, make_plan(6, 10, 42));
    CHECK(a[1].x_m != c[1].x_m);
}

TEST_CASE("summarize worked example") {
    SimResult r1, r2;
    r1.t = r2.t = Eigen::ArrayXd::LinSpaced(2, 0.0, 0.01);
    r1.x = Eigen::ArrayXd(2);
    r1.x << 0.0, 2.0;
    r2.x = Eigen::ArrayXd(2);
    r2.x << 2.0, 4.0;
    r1.v = r2.v = r1.theta = r2.theta = r1.omega = r2.omega = Eigen::ArrayXd::Zero(2);

    const ReplicationSummary s = summarize({r1, r2}, Quantity::position, 1);
    CHECK(s.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.mean[1] == doctest::Approx(3.0).epsilon(1e-15));
    REQUIRE(s.std.has_value());
    CHECK((*s.std)[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK((*s.std)[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("identical replications have zero std; a single one has none") {
    SimResult r1;
    r1.t = Eigen::ArrayXd::LinSpaced(3, 0.0, 0.02);
    r1.x = r1.v = r1.theta = r1.omega = Eigen::ArrayXd::Constant(3, 1.5);
    const ReplicationSummary two = summarize({r1, r1}, Quantity::position, 1);
    REQUIRE(two.std.has_value());
    CHECK((two.std->abs() == 0.0).all());

    const ReplicationSummary one = summarize({r1}, Quantity::position, 1);
    CHECK(one.replications == 1);
    CHECK_FALSE(one.std.has_value());
    CHECK((one.mean == r1.x).all());
}

TEST_CASE("grid mismatch is an alignment error") {
    SimResult r1, r2;
    r1.t = Eigen::ArrayXd::LinSpaced(3, 0.0, 0.02);
    r2.t = Eigen::ArrayXd::LinSpaced(3, 0.0, 0.04);
    r1.x = r2.x = r1.v = r2.v = r1.theta = r2.theta = r1.omega = r2.omega = Eigen::ArrayXd::Zero(3);
    CHECK_THROWS_AS(summarize({r1, r2}, Quantity::position, 1), AlignmentError);
}

TEST_CASE("zero uncertainty collapses the ensemble onto the deterministic twin") {
    const CraneParams p;
    const Trajectory traj = padded_move(p);
    PlantState initial;
    initial.x_m = 0.05;
    ReplicationPlan plan = make_plan(1, 8, 7);
    plan.ic_uncertainty = {0.0, 0.0, 0.0, 0.0};
    const ReplicationResult rep = run_replications(traj, initial, p, plan, 1e-3, 0.01);
    const SimResult direct = simulate(initial, traj, p, 1e-3, 0.01);
    for (Quantity q : {Quantity::position, Quantity::velocity, Quantity::angular_position}) {
        const auto& s = rep.summaries.at(q);
        CHECK((s.mean == direct.values(q)).all());
        REQUIRE(s.std.has_value());
        CHECK((s.std->abs() == 0.0).all());
    }
}

TEST_CASE("summary std at t = 0 equals the sample std of the drawn perturbations") {
    const CraneParams p;
    const Trajectory traj = padded_move(p);
    PlantState initial;
    initial.x_m = 0.05;
    const ReplicationPlan plan = make_plan(1, 50, 42);
    const ReplicationResult rep = run_replications(traj, initial, p, plan, 1e-3, 0.01);

    const auto initials = sample_initial_conditions(initial, plan);
    double mean = 0.0;
    for (const auto& s : initials) mean += s.x_m;
    mean /= static_cast<double>(initials.size());
    double var = 0.0;
    for (const auto& s : initials) var += (s.x_m - mean) * (s.x_m - mean);
    var /= static_cast<double>(initials.size() - 1);

    REQUIRE(rep.summaries.at(Quantity::position).std.has_value());
    CHECK((*rep.summaries.at(Quantity::position).std)[0] ==
          doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("summary is symmetric in replication order") {
    const CraneParams p;
    const Trajectory traj = padded_move(p);
    PlantState initial;
    initial.x_m = 0.05;
    const ReplicationResult rep = run_replications(traj, initial, p, make_plan(3, 12, 9), 1e-3, 0.01);

    std::vector<SimResult> shuffled = rep.replications;
    std::rotate(shuffled.begin(), shuffled.begin() + 5, shuffled.end());
    const ReplicationSummary reordered = summarize(shuffled, Quantity::angular_position, 3);
    const ReplicationSummary& original = rep.summaries.at(Quantity::angular_position);
    for (Eigen::Index i = 0; i < original.t.size(); ++i) {
        CHECK(reordered.mean[i] == doctest::Approx(original.mean[i]).epsilon(1e-13));
        CHECK((*reordered.std)[i] == doctest::Approx((*original.std)[i]).epsilon(1e-12));
    }
}

TEST_CASE("run_replications is a pure function of its inputs") {
    const CraneParams p;
    const Trajectory traj = padded_move(p);
    PlantState initial;
    initial.x_m = 0.05;
    const ReplicationResult a = run_replications(traj, initial, p, make_plan(2, 16, 5), 1e-3, 0.01);
    const ReplicationResult b = run_replications(traj, initial, p, make_plan(2, 16, 5), 1e-3, 0.01);
    for (Quantity q : {Quantity::position, Quantity::angular_velocity}) {
        CHECK((a.summaries.at(q).mean == b.summaries.at(q).mean).all());
        CHECK((*a.summaries.at(q).std == *b.summaries.at(q).std).all());
    }
}

TEST_CASE("default ic uncertainty ties to the measurement noise") {
    NoiseSpec noise;
    CraneParams p;
    const IcUncertainty ic = default_ic_uncertainty(noise, p);
    CHECK(ic.sigma_pos_m == noise.sigma_pos_m);
    CHECK(ic.sigma_vel_mps == noise.sigma_vel_mps);
    CHECK(ic.sigma_theta_rad == noise.sigma_theta_rad);
    CHECK(ic.sigma_omega_radps == doctest::Approx(noise.sigma_theta_rad * p.natural_frequency_radps()));
}
