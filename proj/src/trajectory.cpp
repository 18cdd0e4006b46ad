#include "twinwatch/trajectory.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace twinwatch {

namespace {

/// Trapezoidal velocity profile over distance s with bounds (v_max, a_max).
struct Trapezoid {
    double a = 0.0;   // ramp acceleration
    double v_pk = 0.0;
    double t_a = 0.0; // ramp duration
    double t_f = 0.0; // flat duration
    double s = 0.0;

    double duration() const { return 2.0 * t_a + t_f; }

    double velocity(double tau) const {
        if (tau <= 0.0 || tau >= duration()) return 0.0;
        if (tau < t_a) return a * tau;
        if (tau < t_a + t_f) return v_pk;
        const double td = tau - t_a - t_f;
        return v_pk - a * td;
    }

    double displacement(double tau) const {
        if (tau <= 0.0) return 0.0;
        if (tau >= duration()) return s;
        if (tau < t_a) return 0.5 * a * tau * tau;
        const double s_ramp = 0.5 * v_pk * t_a;
        if (tau < t_a + t_f) return s_ramp + v_pk * (tau - t_a);
        const double td = tau - t_a - t_f;
        return s_ramp + v_pk * t_f + v_pk * td - 0.5 * a * td * td;
    }
};

Trapezoid make_trapezoid(double distance, const CraneParams& p) {
    Trapezoid tz;
    tz.s = distance;
    tz.a = p.a_max_mps2;
    tz.v_pk = std::min(p.v_max_mps, std::sqrt(distance * p.a_max_mps2));
    tz.t_a = tz.v_pk / tz.a;
    tz.t_f = (distance - tz.v_pk * tz.v_pk / tz.a) / tz.v_pk;
    if (tz.t_f < 0.0) tz.t_f = 0.0;
    return tz;
}

/// Two-impulse zero-vibration shaper tuned to the damped pendulum frequency.
struct ZvShaper {
    double a1 = 1.0;
    double a2 = 0.0;
    double lag = 0.0; // impulse separation = half damped period

    static ZvShaper tuned_to(const CraneParams& p) {
        const double wn = p.natural_frequency_radps();
        const double zeta = p.damping_per_s / (2.0 * wn);
        const double wd = wn * std::sqrt(1.0 - zeta * zeta);
        const double k = std::exp(-zeta * M_PI / std::sqrt(1.0 - zeta * zeta));
        ZvShaper sh;
        sh.a1 = 1.0 / (1.0 + k);
        sh.a2 = 1.0 - sh.a1;
        sh.lag = M_PI / wd;
        return sh;
    }
};

} // namespace

void validate(const Trajectory& traj, double sample_period_s) {
    if (traj.size() == 0) throw DomainError("trajectory: empty");
    if (!(traj.v_max_used_mps > 0.0)) throw DomainError("trajectory: v_max_used must be > 0");
    for (Eigen::Index i = 0; i < traj.size(); ++i) {
        if (std::abs(traj.v_cmd[i]) > traj.v_max_used_mps + 1e-12)
            throw DomainError("trajectory: |v_cmd| exceeds v_max_used");
        if (i > 0) {
            const double dt = traj.t[i] - traj.t[i - 1];
            if (std::abs(dt - sample_period_s) > 1e-9)
                throw DomainError("trajectory: non-uniform spacing");
            if (std::abs(traj.x_ref[i] - traj.x_ref[i - 1]) > traj.v_max_used_mps * dt + 1e-12)
                throw DomainError("trajectory: x_ref discontinuity");
        }
    }
    if (traj.v_cmd[0] != 0.0 || traj.v_cmd[traj.size() - 1] != 0.0)
        throw DomainError("trajectory: v_cmd endpoints must be 0");
}

Trajectory generate_trajectory(double start_m, double end_m, const CraneParams& params,
                               double sample_period_s) {
    validate(params);
    if (!(sample_period_s > 0.0)) throw DomainError("generate_trajectory: sample period must be > 0");
    if (start_m < 0.0 || start_m > params.track_length_m || end_m < 0.0 || end_m > params.track_length_m)
        throw PreconditionError("generate_trajectory: move outside track");

    Trajectory traj;
    traj.v_max_used_mps = params.v_max_mps;

    const double distance = std::abs(end_m - start_m);
    if (distance == 0.0) {
        traj.t = Eigen::ArrayXd::Zero(1);
        traj.x_ref = Eigen::ArrayXd::Constant(1, start_m);
        traj.v_cmd = Eigen::ArrayXd::Zero(1);
        return traj;
    }

    const double dir = end_m > start_m ? 1.0 : -1.0;
    const Trapezoid tz = make_trapezoid(distance, params);
    const ZvShaper sh = ZvShaper::tuned_to(params);
    const double duration = tz.duration() + sh.lag;

    const auto n = static_cast<Eigen::Index>(std::ceil(duration / sample_period_s - 1e-9)) + 1;
    traj.t.resize(n);
    traj.x_ref.resize(n);
    traj.v_cmd.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * sample_period_s;
        double v = sh.a1 * tz.velocity(t) + sh.a2 * tz.velocity(t - sh.lag);
        double x = sh.a1 * tz.displacement(t) + sh.a2 * tz.displacement(t - sh.lag);
        v = std::clamp(v, -params.v_max_mps, params.v_max_mps);
        traj.t[k] = t;
        traj.x_ref[k] = start_m + dir * x;
        traj.v_cmd[k] = dir * v;
    }
    traj.v_cmd[0] = 0.0;
    traj.v_cmd[n - 1] = 0.0;
    return traj;
}

Trajectory with_settle_tail(const Trajectory& traj, double tail_s, double sample_period_s) {
    if (traj.size() == 0) throw DomainError("with_settle_tail: empty trajectory");
    if (!(tail_s >= 0.0)) throw DomainError("with_settle_tail: tail must be >= 0");
    const double horizon = traj.duration_s() + tail_s;
    const auto n = static_cast<Eigen::Index>(std::ceil(horizon / sample_period_s - 1e-9)) + 1;
    if (n <= traj.size()) return traj;

    Trajectory out = traj;
    out.t.conservativeResize(n);
    out.x_ref.conservativeResize(n);
    out.v_cmd.conservativeResize(n);
    const double x_hold = traj.x_ref[traj.size() - 1];
    for (Eigen::Index k = traj.size(); k < n; ++k) {
        out.t[k] = static_cast<double>(k) * sample_period_s;
        out.x_ref[k] = x_hold;
        out.v_cmd[k] = 0.0;
    }
    return out;
}

double command_velocity(const Trajectory& traj, double t_s) {
    const Eigen::Index n = traj.size();
    if (n == 0) throw DomainError("command_velocity: empty trajectory");
    if (t_s <= traj.t[0]) return traj.v_cmd[0];
    if (t_s >= traj.t[n - 1]) return traj.v_cmd[n - 1];
    const double* tb = traj.t.data();
    const double* it = std::upper_bound(tb, tb + n, t_s);
    const Eigen::Index j = it - tb; // first index with t > t_s, 1 <= j <= n-1
    const double t0 = traj.t[j - 1], t1 = traj.t[j];
    const double w = (t_s - t0) / (t1 - t0);
    return traj.v_cmd[j - 1] + w * (traj.v_cmd[j] - traj.v_cmd[j - 1]);
}

EnactResult enact(const Trajectory& trajectory, const CraneParams& plant_params, const NoiseSpec& noise,
                  double dt_s, double sample_period_s) {
    validate(trajectory, sample_period_s);

    PlantState initial;
    initial.x_m = trajectory.x_ref[0];
    const SimResult sim = simulate(initial, trajectory, plant_params, dt_s, sample_period_s);

    EnactResult out;
    out.final_state.t_s = sim.t[sim.size() - 1];
    out.final_state.x_m = sim.x[sim.size() - 1];
    out.final_state.v_mps = sim.v[sim.size() - 1];
    out.final_state.theta_rad = sim.theta[sim.size() - 1];
    out.final_state.omega_radps = sim.omega[sim.size() - 1];
    out.max_abs_velocity = sim.v.abs().maxCoeff();

    const double sigma_omega = noise.sigma_theta_rad * plant_params.natural_frequency_radps();
    const struct {
        Quantity q;
        double sigma;
    } channels[] = {
        {Quantity::position, noise.sigma_pos_m},
        {Quantity::velocity, noise.sigma_vel_mps},
        {Quantity::angular_position, noise.sigma_theta_rad},
        {Quantity::angular_velocity, sigma_omega},
    };

    const StreamKey run_key = StreamKey(noise.seed).with(static_cast<std::uint64_t>(trajectory.run_id)).with("meas");
    for (const auto& ch : channels) {
        Trace tr = sim.trace(trajectory.run_id, ch.q, TraceKind::measured);
        if (ch.sigma > 0.0) {
            auto eng = run_key.with(to_string(ch.q)).engine();
            std::normal_distribution<double> dist(0.0, ch.sigma);
            for (Eigen::Index i = 0; i < tr.size(); ++i) tr.v[i] += dist(eng);
        }
        out.measured.emplace(ch.q, std::move(tr));
    }
    return out;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trajectory csv: " + path);
    out << "t_s,x_ref_m,v_cmd_mps\n";
    char buf[128];
    for (Eigen::Index i = 0; i < traj.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", traj.t[i], traj.x_ref[i], traj.v_cmd[i]);
        out << buf;
    }
}

} // namespace twinwatch
