#pragma once

#include "twinwatch/crane.hpp"
#include "twinwatch/trace.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace twinwatch {

struct Trajectory;

/// Per-component standard deviations of the initial-condition uncertainty
/// sampled across replications.
struct IcUncertainty {
    double sigma_pos_m = 0.0;
    double sigma_vel_mps = 0.0;
    double sigma_theta_rad = 0.0;
    double sigma_omega_radps = 0.0;
};

struct NoiseSpec;

/// Default replication stochasticity: the measurement error of the initial
/// conditions. The angular-rate component is sigma_theta * sqrt(g/L); the
/// encoder-count uncertainty translated to a rate over a swing quarter period.
IcUncertainty default_ic_uncertainty(const NoiseSpec& noise, const CraneParams& params);

struct ReplicationPlan {
    RunId run_id = 0;
    int replications = 1;
    IcUncertainty ic_uncertainty;
    std::uint64_t seed = 0;
};

/// Per-timestamp sample mean and sample standard deviation over the
/// replications of one quantity. std is absent when replications == 1.
struct ReplicationSummary {
    RunId run_id = 0;
    Quantity quantity = Quantity::position;
    Eigen::ArrayXd t;
    Eigen::ArrayXd mean;
    std::optional<Eigen::ArrayXd> std; // divisor R - 1
    int replications = 0;
};

struct ReplicationResult {
    std::map<Quantity, ReplicationSummary> summaries;
    std::vector<SimResult> replications; // index r in [0, R)
};

/// Replication r receives the measured initial state plus independent
/// zero-mean Gaussian perturbations per component; replication 0 is the
/// unperturbed measurement. Streams derive from (seed, run_id, r).
std::vector<PlantState> sample_initial_conditions(const PlantState& measured_initial,
                                                  const ReplicationPlan& plan);

/// Runs R noise-free twin simulations from sampled initial conditions on a
/// shared time grid and summarizes them per quantity. Replications execute
/// in parallel; the result is a pure function of (trajectory, params, plan).
ReplicationResult run_replications(const Trajectory& trajectory, const PlantState& measured_initial,
                                   const CraneParams& twin_params, const ReplicationPlan& plan,
                                   double dt_s, double sample_period_s);

/// Elementwise mean and sample standard deviation over replication traces
/// sharing one grid. Grid mismatch raises AlignmentError.
ReplicationSummary summarize(const std::vector<SimResult>& replications, Quantity q, RunId run_id);

} // namespace twinwatch
