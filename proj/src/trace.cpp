#include "twinwatch/trace.hpp"

#include "twinwatch/errors.hpp"

#include <algorithm>
#include <cmath>

namespace twinwatch {

const char* to_string(Quantity q) {
    switch (q) {
    case Quantity::position: return "position";
    case Quantity::velocity: return "velocity";
    case Quantity::angular_position: return "angular_position";
    case Quantity::angular_velocity: return "angular_velocity";
    }
    return "?";
}

const char* to_string(TraceKind k) {
    switch (k) {
    case TraceKind::measured: return "measured";
    case TraceKind::reference: return "reference";
    case TraceKind::simulated: return "simulated";
    case TraceKind::simulated_mean: return "simulated_mean";
    case TraceKind::simulated_std: return "simulated_std";
    }
    return "?";
}

Quantity quantity_from_string(const std::string& s) {
    if (s == "position") return Quantity::position;
    if (s == "velocity") return Quantity::velocity;
    if (s == "angular_position") return Quantity::angular_position;
    if (s == "angular_velocity") return Quantity::angular_velocity;
    throw ConfigError("unknown quantity: " + s);
}

int quantity_id(Quantity q) {
    switch (q) {
    case Quantity::position: return 1;
    case Quantity::velocity: return 2;
    case Quantity::angular_position: return 3;
    case Quantity::angular_velocity: return 4;
    }
    return 0;
}

Quantity quantity_from_id(int id) {
    switch (id) {
    case 1: return Quantity::position;
    case 2: return Quantity::velocity;
    case 3: return Quantity::angular_position;
    case 4: return Quantity::angular_velocity;
    }
    throw NotFoundError("unknown quantity id " + std::to_string(id));
}

void validate(const Trace& trace) {
    if (trace.t.size() != trace.v.size())
        throw DomainError("trace: time and value lengths differ");
    for (Eigen::Index i = 0; i < trace.size(); ++i) {
        if (!std::isfinite(trace.t[i]) || !std::isfinite(trace.v[i]))
            throw DomainError("trace: non-finite sample");
        if (i > 0 && trace.t[i] <= trace.t[i - 1])
            throw DomainError("trace: timestamps not strictly increasing");
    }
}

Trace resample(const Trace& trace, const Eigen::ArrayXd& target_times) {
    if (trace.size() == 0) throw DomainError("resample: empty trace");

    Trace out;
    out.run_id = trace.run_id;
    out.quantity = trace.quantity;
    out.kind = trace.kind;
    out.t = target_times;
    out.v.resize(target_times.size());

    const double* tb = trace.t.data();
    const double* te = tb + trace.t.size();
    for (Eigen::Index i = 0; i < target_times.size(); ++i) {
        const double x = target_times[i];
        if (x < trace.t[0] || x > trace.t[trace.size() - 1])
            throw ExtrapolationError("resample: target outside trace span");
        // first sample with t >= x
        const double* it = std::lower_bound(tb, te, x);
        const Eigen::Index j = it - tb;
        if (*it == x) {
            out.v[i] = trace.v[j]; // exact at original timestamps
        } else {
            const double t0 = trace.t[j - 1], t1 = trace.t[j];
            const double w = (x - t0) / (t1 - t0);
            out.v[i] = trace.v[j - 1] + w * (trace.v[j] - trace.v[j - 1]);
        }
    }
    return out;
}

bool is_uniform_grid(const Eigen::ArrayXd& t, double tol) {
    if (t.size() < 2) return true;
    const double dt = t[1] - t[0];
    for (Eigen::Index i = 2; i < t.size(); ++i) {
        if (std::abs((t[i] - t[i - 1]) - dt) > tol) return false;
    }
    return true;
}

} // namespace twinwatch
