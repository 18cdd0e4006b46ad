#include "twinwatch/crane.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/trajectory.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace twinwatch {

namespace {

bool finite(const PlantState& s) {
    return std::isfinite(s.t_s) && std::isfinite(s.x_m) && std::isfinite(s.v_mps) &&
           std::isfinite(s.theta_rad) && std::isfinite(s.omega_radps);
}

double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

} // namespace

double CraneParams::natural_frequency_radps() const { return std::sqrt(gravity_mps2 / rope_length_m); }

void validate(const CraneParams& p) {
    if (!(p.rope_length_m > 0.0)) throw DomainError("rope_length_m must be > 0");
    if (!(p.gravity_mps2 > 0.0)) throw DomainError("gravity_mps2 must be > 0");
    if (!(p.v_max_mps > 0.0)) throw DomainError("v_max_mps must be > 0");
    if (!(p.a_max_mps2 > 0.0)) throw DomainError("a_max_mps2 must be > 0");
    if (!(p.damping_per_s >= 0.0)) throw DomainError("damping_per_s must be >= 0");
    if (!(p.track_length_m > 0.0)) throw DomainError("track_length_m must be > 0");
}

const char* to_string(FaultKind k) {
    switch (k) {
    case FaultKind::None: return "none";
    case FaultKind::RopeLengthError: return "rope_length_error";
    case FaultKind::VelocityDeficit: return "velocity_deficit";
    }
    return "?";
}

FaultKind fault_kind_from_string(const std::string& s) {
    if (s == "none") return FaultKind::None;
    if (s == "rope_length_error") return FaultKind::RopeLengthError;
    if (s == "velocity_deficit") return FaultKind::VelocityDeficit;
    throw ConfigError("unknown fault kind: " + s);
}

StateDerivative derivatives(const PlantState& state, double a_cmd_mps2, const CraneParams& params) {
    validate(params);
    if (!finite(state) || !std::isfinite(a_cmd_mps2))
        throw DomainError("derivatives: non-finite input");

    double a = clamp(a_cmd_mps2, -params.a_max_mps2, params.a_max_mps2);
    // Motor velocity limit: no drive past the envelope.
    if (state.v_mps >= params.v_max_mps && a > 0.0) a = 0.0;
    else if (state.v_mps <= -params.v_max_mps && a < 0.0) a = 0.0;

    StateDerivative d;
    d.dx = state.v_mps;
    d.dv = a;
    d.dtheta = state.omega_radps;
    d.domega = -(params.gravity_mps2 / params.rope_length_m) * state.theta_rad -
               params.damping_per_s * state.omega_radps - a / params.rope_length_m;
    return d;
}

PlantState step_rk4(const PlantState& state, double a_cmd_mps2, const CraneParams& params, double dt_s) {
    if (!(dt_s > 0.0)) throw DomainError("step_rk4: dt must be > 0");

    using Eigen::Vector4d;
    const Vector4d y0(state.x_m, state.v_mps, state.theta_rad, state.omega_radps);

    auto f = [&](const Vector4d& y) -> Vector4d {
        PlantState s;
        s.t_s = state.t_s;
        s.x_m = y[0];
        s.v_mps = y[1];
        s.theta_rad = y[2];
        s.omega_radps = y[3];
        const StateDerivative d = derivatives(s, a_cmd_mps2, params);
        return Vector4d(d.dx, d.dv, d.dtheta, d.domega);
    };

    const Vector4d k1 = f(y0);
    const Vector4d k2 = f(y0 + (dt_s / 2.0) * k1);
    const Vector4d k3 = f(y0 + (dt_s / 2.0) * k2);
    const Vector4d k4 = f(y0 + dt_s * k3);
    Vector4d y = y0 + (dt_s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    y[1] = clamp(y[1], -params.v_max_mps, params.v_max_mps);

    PlantState next;
    next.t_s = state.t_s + dt_s;
    next.x_m = y[0];
    next.v_mps = y[1];
    next.theta_rad = y[2];
    next.omega_radps = y[3];
    return next;
}

CraneParams apply_fault(const CraneParams& params, const FaultSpec& fault) {
    if (fault.delta_fraction <= -1.0) throw DomainError("apply_fault: delta must be > -1");
    CraneParams out = params;
    switch (fault.kind) {
    case FaultKind::None:
        break;
    case FaultKind::RopeLengthError:
        out.rope_length_m = params.rope_length_m * (1.0 + fault.delta_fraction);
        break;
    case FaultKind::VelocityDeficit:
        out.v_max_mps = params.v_max_mps / (1.0 + fault.delta_fraction);
        break;
    }
    return out;
}

const Eigen::ArrayXd& SimResult::values(Quantity q) const {
    switch (q) {
    case Quantity::position: return x;
    case Quantity::velocity: return v;
    case Quantity::angular_position: return theta;
    case Quantity::angular_velocity: return omega;
    }
    return x;
}

Trace SimResult::trace(RunId run_id, Quantity q, TraceKind kind) const {
    Trace tr;
    tr.run_id = run_id;
    tr.quantity = q;
    tr.kind = kind;
    tr.t = t;
    tr.v = values(q);
    return tr;
}

SimResult simulate(const PlantState& initial, const Trajectory& trajectory, const CraneParams& params,
                   double dt_s, double sample_period_s) {
    validate(params);
    if (!(dt_s > 0.0) || !(sample_period_s > 0.0)) throw DomainError("simulate: steps must be > 0");
    const double ratio = sample_period_s / dt_s;
    const auto substeps = static_cast<Eigen::Index>(std::llround(ratio));
    if (substeps < 1 || std::abs(ratio - static_cast<double>(substeps)) > 1e-9)
        throw PreconditionError("simulate: sample_period must be an integer multiple of dt");
    if (trajectory.size() == 0) throw PreconditionError("simulate: empty trajectory");

    const Eigen::Index n_samples =
        static_cast<Eigen::Index>(std::llround(trajectory.duration_s() / sample_period_s)) + 1;
    if (trajectory.duration_s() + 1e-12 < (n_samples - 1) * sample_period_s)
        throw PreconditionError("simulate: trajectory shorter than horizon");

    SimResult out;
    out.t.resize(n_samples);
    out.x.resize(n_samples);
    out.v.resize(n_samples);
    out.theta.resize(n_samples);
    out.omega.resize(n_samples);

    PlantState s = initial;
    s.t_s = 0.0;
    for (Eigen::Index k = 0; k < n_samples; ++k) {
        out.t[k] = static_cast<double>(k) * sample_period_s;
        out.x[k] = s.x_m;
        out.v[k] = s.v_mps;
        out.theta[k] = s.theta_rad;
        out.omega[k] = s.omega_radps;
        if (k + 1 == n_samples) break;
        for (Eigen::Index i = 0; i < substeps; ++i) {
            const double v_cmd = command_velocity(trajectory, s.t_s);
            const double a_cmd = kVelocityTrackingGain * (v_cmd - s.v_mps);
            s = step_rk4(s, a_cmd, params, dt_s);
        }
    }
    return out;
}

CraneParams crane_params_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open crane params file: " + path);
    nlohmann::json j;
    in >> j;
    CraneParams p;
    p.rope_length_m = j.at("rope_length_m").get<double>();
    p.gravity_mps2 = j.value("gravity_mps2", p.gravity_mps2);
    p.v_max_mps = j.at("v_max_mps").get<double>();
    p.a_max_mps2 = j.at("a_max_mps2").get<double>();
    p.damping_per_s = j.value("damping_per_s", p.damping_per_s);
    p.track_length_m = j.value("track_length_m", p.track_length_m);
    validate(p);
    return p;
}

void write_crane_params_json(const CraneParams& p, const std::string& path) {
    nlohmann::json j;
    j["rope_length_m"] = p.rope_length_m;
    j["gravity_mps2"] = p.gravity_mps2;
    j["v_max_mps"] = p.v_max_mps;
    j["a_max_mps2"] = p.a_max_mps2;
    j["damping_per_s"] = p.damping_per_s;
    j["track_length_m"] = p.track_length_m;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write crane params file: " + path);
    out << j.dump(2) << "\n";
}

double get_param(const CraneParams& p, const std::string& name) {
    if (name == "rope_length_m") return p.rope_length_m;
    if (name == "gravity_mps2") return p.gravity_mps2;
    if (name == "v_max_mps") return p.v_max_mps;
    if (name == "a_max_mps2") return p.a_max_mps2;
    if (name == "damping_per_s") return p.damping_per_s;
    if (name == "track_length_m") return p.track_length_m;
    throw ConfigError("unknown crane parameter: " + name);
}

void set_param(CraneParams& p, const std::string& name, double value) {
    if (name == "rope_length_m") p.rope_length_m = value;
    else if (name == "gravity_mps2") p.gravity_mps2 = value;
    else if (name == "v_max_mps") p.v_max_mps = value;
    else if (name == "a_max_mps2") p.a_max_mps2 = value;
    else if (name == "damping_per_s") p.damping_per_s = value;
    else if (name == "track_length_m") p.track_length_m = value;
    else throw ConfigError("unknown crane parameter: " + name);
}

} // namespace twinwatch
