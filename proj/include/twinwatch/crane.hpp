#pragma once

#include "twinwatch/trace.hpp"

#include <Eigen/Core>

#include <map>

namespace twinwatch {

struct Trajectory;

/// Model parameters shared by the plant and the twin. The two sides use the
/// same ODE core with possibly different values.
struct CraneParams {
    double rope_length_m = 0.4;
    double gravity_mps2 = 9.81;
    double v_max_mps = 0.281;
    double a_max_mps2 = 2.0;
    double damping_per_s = 0.05;
    double track_length_m = 0.7;

    double natural_frequency_radps() const; // sqrt(g/L)
};

/// Throws DomainError on nonpositive lengths/limits or negative damping.
void validate(const CraneParams& p);

/// Full state of the cart-pendulum: cart position/velocity and rope angle
/// from vertical with its rate.
struct PlantState {
    double t_s = 0.0;
    double x_m = 0.0;
    double v_mps = 0.0;
    double theta_rad = 0.0;
    double omega_radps = 0.0;
};

/// Time derivative of a PlantState (t excluded).
struct StateDerivative {
    double dx = 0.0;     // = v
    double dv = 0.0;     // applied cart acceleration
    double dtheta = 0.0; // = omega
    double domega = 0.0;
};

enum class FaultKind { None, RopeLengthError, VelocityDeficit };

/// An injectable divergence between the plant and the twin's belief.
struct FaultSpec {
    FaultKind kind = FaultKind::None;
    double delta_fraction = 0.0; // signed, e.g. +0.10 = +10%
};

const char* to_string(FaultKind k);
FaultKind fault_kind_from_string(const std::string& s);

/// Linearized cart-pendulum kinematics:
///   xdot = v, vdot = a, thetadot = omega,
///   omegadot = -(g/L) theta - c omega - a/L
/// where a is the command clamped to +-a_max and zeroed when it would push
/// |v| beyond v_max. Non-finite inputs raise DomainError.
StateDerivative derivatives(const PlantState& state, double a_cmd_mps2, const CraneParams& params);

/// Classic fourth-order Runge-Kutta step with the command held constant over
/// the step. The cart velocity is projected back into [-v_max, v_max] after
/// the update; the motor enforces its velocity limit in hardware.
PlantState step_rk4(const PlantState& state, double a_cmd_mps2, const CraneParams& params, double dt_s);

/// Derives the plant's parameter set from the twin's belief and a fault.
/// RopeLengthError scales the rope by (1 + delta). VelocityDeficit yields the
/// plant whose v_max is the twin's v_max / (1 + delta): the twin believes the
/// plant is faster than it is.
CraneParams apply_fault(const CraneParams& params, const FaultSpec& fault);

/// Raw sampled state trajectories produced by one simulation.
struct SimResult {
    Eigen::ArrayXd t;
    Eigen::ArrayXd x;
    Eigen::ArrayXd v;
    Eigen::ArrayXd theta;
    Eigen::ArrayXd omega;

    Eigen::Index size() const { return t.size(); }
    const Eigen::ArrayXd& values(Quantity q) const;
    Trace trace(RunId run_id, Quantity q, TraceKind kind) const;
};

/// Integrates the plant from `initial` under the trajectory-following control
/// law, emitting samples every `sample_period_s` on a grid starting at t = 0.
/// `sample_period_s` must be an integer multiple of `dt_s` and the trajectory
/// must cover the sampled horizon. Deterministic for identical inputs.
SimResult simulate(const PlantState& initial, const Trajectory& trajectory, const CraneParams& params,
                   double dt_s, double sample_period_s);

/// CraneParams <-> JSON parameter file (field names as above, SI units).
CraneParams crane_params_from_json_file(const std::string& path);
void write_crane_params_json(const CraneParams& p, const std::string& path);

/// Named access to the tunable parameters, used by the estimator.
double get_param(const CraneParams& p, const std::string& name);
void set_param(CraneParams& p, const std::string& name, double value);

} // namespace twinwatch
