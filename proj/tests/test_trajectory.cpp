#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twinwatch/crane.hpp"
#include "twinwatch/errors.hpp"
#include "twinwatch/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

using namespace twinwatch;

TEST_CASE("start == end yields a single all-zero sample") {
    const CraneParams p;
    const Trajectory traj = generate_trajectory(0.1, 0.1, p, 0.01);
    CHECK(traj.size() == 1);
    CHECK(traj.v_cmd[0] == 0.0);
    CHECK(traj.x_ref[0] == 0.1);
}

TEST_CASE("a long move is velocity limited at 0.281 m/s") {
    const CraneParams p;
    const Trajectory traj = generate_trajectory(0.0, 0.5, p, 0.01);
    CHECK(traj.peak_v_cmd() == doctest::Approx(0.281).epsilon(1e-9));
    CHECK(traj.peak_v_cmd() <= p.v_max_mps);
}

TEST_CASE("generated trajectory satisfies its invariants") {
    const CraneParams p;
    for (auto [a, b] : {std::pair{0.05, 0.55}, std::pair{0.6, 0.1}, std::pair{0.0, 0.05}}) {
        const Trajectory traj = generate_trajectory(a, b, p, 0.01);
        CHECK_NOTHROW(validate(traj, 0.01));
        CHECK(traj.v_cmd[0] == 0.0);
        CHECK(traj.v_cmd[traj.size() - 1] == 0.0);
        // acceleration bound between samples
        for (Eigen::Index i = 1; i < traj.size(); ++i) {
            const double dv = std::abs(traj.v_cmd[i] - traj.v_cmd[i - 1]);
            CHECK(dv / 0.01 <= p.a_max_mps2 + 1e-9);
        }
        // displacement integrates to the commanded move
        CHECK(std::abs(traj.x_ref[traj.size() - 1] - b) < 1e-4);
        CHECK(traj.x_ref[0] == a);
    }
}

TEST_CASE("moves outside the track are rejected") {
    const CraneParams p; // track 0.7
    CHECK_THROWS_AS(generate_trajectory(0.0, 0.8, p, 0.01), PreconditionError);
    CHECK_THROWS_AS(generate_trajectory(-0.1, 0.5, p, 0.01), PreconditionError);
}

TEST_CASE("settle tail extends the grid with hold samples") {
    const CraneParams p;
    const Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    const Trajectory padded = with_settle_tail(traj, 2.0, 0.01);
    CHECK(padded.size() > traj.size());
    CHECK(padded.duration_s() >= traj.duration_s() + 2.0 - 1e-9);
    CHECK(padded.v_cmd[padded.size() - 1] == 0.0);
    CHECK(padded.x_ref[padded.size() - 1] == traj.x_ref[traj.size() - 1]);
    // measured trace length equals trajectory length plus the fixed tail
    CHECK(padded.size() == traj.size() + static_cast<Eigen::Index>(std::llround(2.0 / 0.01)));
}

TEST_CASE("noise-free enactment matches the twin simulation") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    traj.run_id = 1;
    const Trajectory padded = with_settle_tail(traj, 2.0, 0.01);

    NoiseSpec zero_noise;
    zero_noise.sigma_pos_m = 0.0;
    zero_noise.sigma_vel_mps = 0.0;
    zero_noise.sigma_theta_rad = 0.0;
    const EnactResult enacted = enact(padded, p, zero_noise, 1e-3, 0.01);

    PlantState initial;
    initial.x_m = 0.05;
    const SimResult twin = simulate(initial, padded, p, 1e-3, 0.01);

    const Eigen::ArrayXd diff = enacted.measured.at(Quantity::position).v - twin.x;
    const double rmse = std::sqrt(diff.square().mean());
    CHECK(rmse < 1e-4);
    // with zero sigmas the measured trace is exactly the plant state
    CHECK((enacted.measured.at(Quantity::position).v == twin.x).all());
    CHECK((enacted.measured.at(Quantity::velocity).v == twin.v).all());
}

TEST_CASE("nominal tracking error stays under 5 mm (noise-free)") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    const Trajectory padded = with_settle_tail(traj, 2.0, 0.01);
    NoiseSpec zero_noise;
    zero_noise.sigma_pos_m = zero_noise.sigma_vel_mps = zero_noise.sigma_theta_rad = 0.0;
    const EnactResult enacted = enact(padded, p, zero_noise, 1e-3, 0.01);
    const Eigen::ArrayXd err = (enacted.measured.at(Quantity::position).v - padded.x_ref).abs();
    CHECK(err.maxCoeff() <= 0.005);
}

TEST_CASE("velocity deficit caps the measured speed") {
    CraneParams twin;
    const CraneParams plant = apply_fault(twin, {FaultKind::VelocityDeficit, 0.10});
    Trajectory traj = generate_trajectory(0.05, 0.55, twin, 0.01);
    traj.run_id = 3;
    const Trajectory padded = with_settle_tail(traj, 2.0, 0.01);
    NoiseSpec zero_noise;
    zero_noise.sigma_pos_m = zero_noise.sigma_vel_mps = zero_noise.sigma_theta_rad = 0.0;
    const EnactResult enacted = enact(padded, plant, zero_noise, 1e-3, 0.01);
    CHECK(enacted.max_abs_velocity == doctest::Approx(0.281 / 1.10).epsilon(1e-6));
    CHECK(enacted.max_abs_velocity < traj.peak_v_cmd());
}

TEST_CASE("measurement noise is reproducible per (seed, run_id)") {
    const CraneParams p;
    Trajectory traj = generate_trajectory(0.05, 0.55, p, 0.01);
    traj.run_id = 7;
    const Trajectory padded = with_settle_tail(traj, 1.0, 0.01);
    NoiseSpec noise;
    noise.seed = 99;
    const EnactResult a = enact(padded, p, noise, 1e-3, 0.01);
    const EnactResult b = enact(padded, p, noise, 1e-3, 0.01);
    for (Quantity q : {Quantity::position, Quantity::velocity, Quantity::angular_position,
                       Quantity::angular_velocity})
        CHECK((a.measured.at(q).v == b.measured.at(q).v).all());

    Trajectory other = padded;
    other.run_id = 8;
    const EnactResult c = enact(other, p, noise, 1e-3, 0.01);
    CHECK((a.measured.at(Quantity::position).v != c.measured.at(Quantity::position).v).any());
}

TEST_CASE("trajectory csv uses the t_s,x_ref_m,v_cmd_mps contract") {
    const CraneParams p;
    const Trajectory traj = generate_trajectory(0.1, 0.2, p, 0.01);
    const std::string path = "/tmp/twinwatch_test_traj.csv";
    write_trajectory_csv(traj, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t_s,x_ref_m,v_cmd_mps");
    std::string first;
    std::getline(in, first);
    CHECK(first.substr(0, 2) == "0,");
    // one data row per sample
    int rows = 1;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == traj.size());
}
