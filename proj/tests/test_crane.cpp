#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twinwatch/crane.hpp"
#include "twinwatch/errors.hpp"
#include "twinwatch/trajectory.hpp"

#include <cmath>
#include <numbers>

using namespace twinwatch;

namespace {

CraneParams free_pendulum(double rope_length) {
    CraneParams p;
    p.rope_length_m = rope_length;
    p.damping_per_s = 0.0;
    return p;
}

/// Integrates the unforced pendulum and returns the time of the first
/// downward zero crossing of theta (half the oscillation period).
double first_zero_crossing(const CraneParams& p, double theta0, double dt) {
    PlantState s;
    s.theta_rad = theta0;
    double prev_theta = s.theta_rad;
    double prev_t = 0.0;
    for (int i = 0; i < 4'000'000; ++i) {
        const PlantState next = step_rk4(s, 0.0, p, dt);
        if (prev_theta > 0.0 && next.theta_rad <= 0.0) {
            // linear interpolation between the bracketing steps
            const double w = prev_theta / (prev_theta - next.theta_rad);
            return prev_t + w * dt;
        }
        prev_theta = next.theta_rad;
        prev_t = next.t_s;
        s = next;
    }
    FAIL("no zero crossing found");
    return 0.0;
}

PlantState run_free(const CraneParams& p, PlantState s, double t_end, double dt) {
    const auto steps = static_cast<long>(std::llround(t_end / dt));
    for (long i = 0; i < steps; ++i) s = step_rk4(s, 0.0, p, dt);
    return s;
}

} // namespace

TEST_CASE("equilibrium is a fixed point of the derivatives") {
    const CraneParams p;
    const PlantState rest;
    const StateDerivative d = derivatives(rest, 0.0, p);
    CHECK(d.dx == 0.0);
    CHECK(d.dv == 0.0);
    CHECK(d.dtheta == 0.0);
    CHECK(d.domega == 0.0);
}

TEST_CASE("angular acceleration matches the linearized pendulum") {
    CraneParams p = free_pendulum(0.4);
    PlantState s;
    s.theta_rad = 0.01;
    const StateDerivative d = derivatives(s, 0.0, p);
    CHECK(d.domega == doctest::Approx(-0.24525).epsilon(1e-12));
}

TEST_CASE("command clamps to a_max") {
    const CraneParams p; // a_max = 2
    const PlantState rest;
    CHECK(derivatives(rest, 10.0, p).dv == 2.0);
    CHECK(derivatives(rest, -10.0, p).dv == -2.0);
}

TEST_CASE("no drive past the velocity envelope") {
    const CraneParams p;
    PlantState s;
    s.v_mps = p.v_max_mps;
    CHECK(derivatives(s, 1.0, p).dv == 0.0);
    CHECK(derivatives(s, -1.0, p).dv == -1.0);
    s.v_mps = -p.v_max_mps;
    CHECK(derivatives(s, -1.0, p).dv == 0.0);
}

TEST_CASE("non-finite input is a domain error") {
    const CraneParams p;
    PlantState s;
    s.theta_rad = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(derivatives(s, 0.0, p), DomainError);
    CHECK_THROWS_AS(derivatives(PlantState{}, std::numeric_limits<double>::infinity(), p), DomainError);
}

TEST_CASE("rk4 advances time and keeps the equilibrium") {
    const CraneParams p;
    const PlantState next = step_rk4(PlantState{}, 0.0, p, 0.25);
    CHECK(next.t_s == 0.25);
    CHECK(next.x_m == 0.0);
    CHECK(next.v_mps == 0.0);
    CHECK(next.theta_rad == 0.0);
    CHECK(next.omega_radps == 0.0);
}

TEST_CASE("small-angle free oscillation period within 1%") {
    for (double rope : {0.3, 0.4, 0.5}) {
        const CraneParams p = free_pendulum(rope);
        const double expected = 2.0 * std::numbers::pi * std::sqrt(rope / p.gravity_mps2);
        const double half = first_zero_crossing(p, 0.01, 1e-3);
        CHECK(std::abs(2.0 * half - expected) / expected < 0.01);
    }
}

TEST_CASE("period holds for initial angles up to 2 degrees") {
    const CraneParams p = free_pendulum(0.4);
    const double expected = 2.0 * std::numbers::pi * std::sqrt(0.4 / p.gravity_mps2);
    const double half = first_zero_crossing(p, 2.0 * std::numbers::pi / 180.0, 1e-3);
    CHECK(std::abs(2.0 * half - expected) / expected < 0.01);
}

TEST_CASE("rk4 step halving: 5 s free pendulum changes by less than 1e-8") {
    const CraneParams p = free_pendulum(0.4);
    PlantState s0;
    s0.theta_rad = 0.05;
    s0.omega_radps = 0.1;
    const PlantState a = run_free(p, s0, 5.0, 1e-3);
    const PlantState b = run_free(p, s0, 5.0, 5e-4);
    CHECK(std::abs(a.x_m - b.x_m) < 1e-8);
    CHECK(std::abs(a.v_mps - b.v_mps) < 1e-8);
    CHECK(std::abs(a.theta_rad - b.theta_rad) < 1e-8);
    CHECK(std::abs(a.omega_radps - b.omega_radps) < 1e-8);
}

TEST_CASE("rk4 step-halving error ratio is at least 8") {
    CraneParams p = free_pendulum(0.4);
    p.damping_per_s = 0.05;
    PlantState s0;
    s0.theta_rad = 0.05;
    const double dt = 4e-3;
    const PlantState coarse = run_free(p, s0, 2.0, dt);
    const PlantState mid = run_free(p, s0, 2.0, dt / 2.0);
    const PlantState fine = run_free(p, s0, 2.0, dt / 4.0);
    const double err_coarse = std::abs(coarse.theta_rad - fine.theta_rad) +
                              std::abs(coarse.omega_radps - fine.omega_radps);
    const double err_mid = std::abs(mid.theta_rad - fine.theta_rad) +
                           std::abs(mid.omega_radps - fine.omega_radps);
    CHECK(err_coarse / err_mid >= 8.0);
}

TEST_CASE("damped envelope is non-increasing across extrema") {
    CraneParams p = free_pendulum(0.4);
    p.damping_per_s = 0.05;
    PlantState s;
    s.theta_rad = 0.03;
    double prev_omega = s.omega_radps;
    double last_extreme = std::abs(s.theta_rad);
    int extrema = 0;
    for (int i = 0; i < 20000; ++i) {
        const PlantState next = step_rk4(s, 0.0, p, 1e-3);
        if (prev_omega != 0.0 && next.omega_radps * prev_omega < 0.0) {
            const double extreme = std::abs(next.theta_rad);
            CHECK(extreme <= last_extreme + 1e-12);
            last_extreme = extreme;
            ++extrema;
        }
        prev_omega = next.omega_radps;
        s = next;
    }
    CHECK(extrema > 10);
}

TEST_CASE("apply_fault") {
    CraneParams p;
    p.rope_length_m = 0.4;
    p.v_max_mps = 0.281;

    SUBCASE("rope length scales by 1 + delta") {
        const CraneParams f = apply_fault(p, {FaultKind::RopeLengthError, 0.05});
        CHECK(f.rope_length_m == doctest::Approx(0.42).epsilon(1e-12));
        CHECK(f.v_max_mps == p.v_max_mps);
    }
    SUBCASE("velocity deficit divides the plant's v_max") {
        const CraneParams f = apply_fault(p, {FaultKind::VelocityDeficit, 0.10});
        CHECK(f.v_max_mps == doctest::Approx(0.281 / 1.10).epsilon(1e-12));
        CHECK(f.rope_length_m == p.rope_length_m);
    }
    SUBCASE("none is the identity") {
        const CraneParams f = apply_fault(p, {FaultKind::None, 0.3});
        CHECK(f.rope_length_m == p.rope_length_m);
        CHECK(f.v_max_mps == p.v_max_mps);
    }
    SUBCASE("delta <= -1 is a domain error") {
        CHECK_THROWS_AS(apply_fault(p, {FaultKind::RopeLengthError, -1.0}), DomainError);
    }
}

TEST_CASE("simulate: zero-length trajectory keeps the initial state") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.1, 0.1, p, 0.01);
    traj = with_settle_tail(traj, 1.0, 0.01);
    PlantState initial;
    initial.x_m = 0.1;
    const SimResult sim = simulate(initial, traj, p, 1e-3, 0.01);
    CHECK((sim.x == 0.1).all());
    CHECK((sim.v == 0.0).all());
    CHECK((sim.theta == 0.0).all());
}

TEST_CASE("simulate is deterministic") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    traj = with_settle_tail(traj, 2.0, 0.01);
    PlantState initial;
    initial.x_m = 0.05;
    const SimResult a = simulate(initial, traj, p, 1e-3, 0.01);
    const SimResult b = simulate(initial, traj, p, 1e-3, 0.01);
    CHECK((a.x == b.x).all());
    CHECK((a.v == b.v).all());
    CHECK((a.theta == b.theta).all());
    CHECK((a.omega == b.omega).all());
}

TEST_CASE("nominal move arrives on target with minimal residual swing") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    traj = with_settle_tail(traj, 2.0, 0.01);
    PlantState initial;
    initial.x_m = 0.05;
    const SimResult sim = simulate(initial, traj, p, 1e-3, 0.01);
    const Eigen::Index last = sim.size() - 1;
    CHECK(std::abs(sim.x[last] - 0.55) < 1e-3);
    // residual swing after arrival stays under half a degree
    const double arrival = traj.duration_s() - 2.0; // generated move ends here
    double max_theta = 0.0;
    for (Eigen::Index i = 0; i < sim.size(); ++i)
        if (sim.t[i] > arrival) max_theta = std::max(max_theta, std::abs(sim.theta[i]));
    CHECK(max_theta < 0.5 * std::numbers::pi / 180.0);
}

TEST_CASE("velocity envelope holds under a deficit fault") {
    CraneParams twin;
    const CraneParams plant = apply_fault(twin, {FaultKind::VelocityDeficit, 0.10});
    Trajectory traj = generate_trajectory(0.05, 0.55, twin, 0.01); // commands up to 0.281
    traj = with_settle_tail(traj, 2.0, 0.01);
    PlantState initial;
    initial.x_m = 0.05;
    const SimResult sim = simulate(initial, traj, plant, 1e-3, 0.01);
    CHECK(sim.v.abs().maxCoeff() <= plant.v_max_mps + 1e-9);
    // the deficit plant saturates at its own envelope
    CHECK(sim.v.abs().maxCoeff() == doctest::Approx(plant.v_max_mps).epsilon(1e-6));
}

TEST_CASE("trajectory not covering the sample horizon is a precondition error") {
    const CraneParams p;
    Trajectory traj;
    traj.v_max_used_mps = p.v_max_mps;
    traj.t = Eigen::ArrayXd(3);
    traj.t << 0.0, 0.005, 0.015; // ends off the 10 ms sample grid
    traj.x_ref = Eigen::ArrayXd::Zero(3);
    traj.v_cmd = Eigen::ArrayXd::Zero(3);
    CHECK_THROWS_AS(simulate(PlantState{}, traj, p, 1e-3, 0.01), PreconditionError);
}

TEST_CASE("sample period must be an integer multiple of dt") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.1, 0.1, p, 0.01);
    traj = with_settle_tail(traj, 0.5, 0.01);
    PlantState initial;
    initial.x_m = 0.1;
    CHECK_THROWS_AS(simulate(initial, traj, p, 3e-3, 0.01), PreconditionError);
}

TEST_CASE("crane params json round-trip") {
    CraneParams p;
    p.rope_length_m = 0.35;
    p.v_max_mps = 0.3;
    const std::string path = "/tmp/twinwatch_test_params.json";
    write_crane_params_json(p, path);
    const CraneParams q = crane_params_from_json_file(path);
    CHECK(q.rope_length_m == p.rope_length_m);
    CHECK(q.v_max_mps == p.v_max_mps);
    CHECK(q.a_max_mps2 == p.a_max_mps2);
}
