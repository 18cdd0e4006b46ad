#pragma once

#include "twinwatch/crane.hpp"
#include "twinwatch/trace.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>

namespace twinwatch {

/// Gain of the velocity-tracking control law a = kv (v_cmd - v).
/// At 1 kHz stepping this tracks without oscillation and keeps the position
/// lag below the 5 mm tracking budget (v_max / kv = 3.5 mm).
inline constexpr double kVelocityTrackingGain = 80.0; // 1/s

/// Anti-sway reference trajectory: a trapezoidal velocity profile convolved
/// with a two-impulse zero-vibration shaper tuned to the pendulum frequency.
struct Trajectory {
    RunId run_id = 0;
    Eigen::ArrayXd t;     // strictly increasing, uniform sample_period spacing
    Eigen::ArrayXd x_ref; // position setpoint (m)
    Eigen::ArrayXd v_cmd; // commanded velocity (m/s), first and last are 0
    double v_max_used_mps = 0.0;

    Eigen::Index size() const { return t.size(); }
    double duration_s() const { return t.size() ? t[t.size() - 1] : 0.0; }
    double peak_v_cmd() const { return t.size() ? v_cmd.abs().maxCoeff() : 0.0; }
};

/// Throws DomainError when the trajectory violates its invariants (spacing,
/// bound on |v_cmd|, continuity of x_ref, zero endpoints).
void validate(const Trajectory& traj, double sample_period_s);

/// Additive zero-mean Gaussian measurement noise per quantity. The angular
/// velocity channel uses sigma_theta_rad * sqrt(g/L) (one encoder count over
/// a swing quarter period).
struct NoiseSpec {
    double sigma_pos_m = 0.0005;
    double sigma_vel_mps = 0.001;
    double sigma_theta_rad = 0.000767; // one count of a 2048 PPR encoder
    std::uint64_t seed = 0;
};

/// Generates the shaped trapezoid trajectory from `start_m` to `end_m` under
/// the params' velocity/acceleration bounds. start == end yields a single
/// all-zero sample; a move outside the track raises PreconditionError.
Trajectory generate_trajectory(double start_m, double end_m, const CraneParams& params,
                               double sample_period_s);

/// Extends a trajectory past its end with hold samples (x_ref fixed, v_cmd 0)
/// so the post-arrival swing is observable.
Trajectory with_settle_tail(const Trajectory& traj, double tail_s, double sample_period_s);

/// Commanded velocity at time t, linearly interpolated between samples and
/// held at the endpoint values outside the span.
double command_velocity(const Trajectory& traj, double t_s);

struct EnactResult {
    std::map<Quantity, Trace> measured; // kind = measured, run-relative time
    PlantState final_state;
    double max_abs_velocity = 0.0; // of the true (pre-noise) plant trace
};

/// Simulates the plant (possibly faulted params) following `trajectory` and
/// overlays per-quantity Gaussian measurement noise. Noise streams derive
/// from (noise.seed, run_id); identical inputs give identical traces.
EnactResult enact(const Trajectory& trajectory, const CraneParams& plant_params, const NoiseSpec& noise,
                  double dt_s, double sample_period_s);

/// Writes `t_s,x_ref_m,v_cmd_mps` CSV with 9 significant digits.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

} // namespace twinwatch
