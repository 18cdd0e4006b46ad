#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace twinwatch {

using RunId = std::int64_t;

/// Response quantities that are both simulated and measurable on the crane.
enum class Quantity { position, velocity, angular_position, angular_velocity };

enum class TraceKind { measured, reference, simulated, simulated_mean, simulated_std };

const char* to_string(Quantity q);
const char* to_string(TraceKind k);
Quantity quantity_from_string(const std::string& s);

/// Stable numeric ids used by the store's quantity table.
int quantity_id(Quantity q);
Quantity quantity_from_id(int id);

/// A time-indexed series of one quantity for one run.
struct Trace {
    RunId run_id = 0;
    Quantity quantity = Quantity::position;
    TraceKind kind = TraceKind::measured;
    Eigen::ArrayXd t; // seconds, run-relative, strictly increasing
    Eigen::ArrayXd v; // values, finite

    Eigen::Index size() const { return t.size(); }
};

/// Throws DomainError unless t is strictly increasing and all values finite.
void validate(const Trace& trace);

/// Linear interpolation of `trace` onto `target_times`. Exact at original
/// timestamps. Targets outside [t.front(), t.back()] raise ExtrapolationError;
/// measured data is never extrapolated.
Trace resample(const Trace& trace, const Eigen::ArrayXd& target_times);

/// True when the grid spacing is uniform to within `tol` of the first step.
bool is_uniform_grid(const Eigen::ArrayXd& t, double tol = 1e-9);

} // namespace twinwatch
