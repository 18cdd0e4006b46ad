#pragma once

#include "twinwatch/trace.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace twinwatch {

struct ReplicationSummary; // replication.hpp

enum class Metric { rmse, mean_ned, total_ned, avg_rel_err, max_rel_err };

const char* to_string(Metric m);
Metric metric_from_string(const std::string& s);
inline constexpr Metric kAllMetrics[] = {Metric::rmse, Metric::mean_ned, Metric::total_ned,
                                         Metric::avg_rel_err, Metric::max_rel_err};

/// Near-zero exclusion thresholds, in the units of the quantity at hand.
/// Samples with sigma below eps_sigma (normalized distances) or |mean| below
/// eps_mean (relative errors) are excluded rather than allowed to blow up.
struct MetricConfig {
    double eps_sigma = 1e-6;
    double eps_mean = 1e-6;
};

struct MetricResult {
    RunId run_id = 0;
    Quantity quantity = Quantity::position;
    Metric metric = Metric::rmse;
    double value = 0.0;
    Eigen::Index included = 0;
    Eigen::Index excluded = 0;
};

/// Pointwise normalized Euclidean distances with their inclusion mask.
struct NedPointwise {
    Eigen::ArrayXd d;                   // defined only where included
    Eigen::Array<bool, Eigen::Dynamic, 1> included;
};

/// sqrt(mean((pred_mean - measured)^2)); keeps the quantity's unit, no
/// exclusions. Length mismatch raises AlignmentError.
MetricResult rmse(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& measured);

/// d_i = |pred_mean_i - measured_i| / sigma_i, computed only where
/// sigma_i >= eps_sigma. Raises DegenerateDataError when nothing is included.
NedPointwise ned_pointwise(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& pred_std,
                           const Eigen::ArrayXd& measured, const MetricConfig& cfg);

/// Mean of the included distances.
MetricResult mean_ned(const NedPointwise& ned);

/// sqrt of the mean of the squared included distances: the corrected total
/// normalized Euclidean distance that stays comparable across traces with
/// different exclusion counts.
MetricResult total_ned(const NedPointwise& ned);

/// Mean over included samples (|pred_mean| >= eps_mean) of
/// |measured - pred_mean| / |pred_mean|. Rectangle-rule discretization of the
/// time integral; requires a uniform grid.
MetricResult avg_rel_err(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& measured,
                         const Eigen::ArrayXd& times, const MetricConfig& cfg);

/// Max over included samples of |measured - pred_mean| / |pred_mean|.
MetricResult max_rel_err(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& measured,
                         const MetricConfig& cfg);

/// All five metrics for one quantity. The measured trace must already live on
/// the summary grid. Degenerate metrics are omitted, not reported as zero;
/// the normalized-distance metrics are omitted when the summary carries no
/// standard deviation (fewer than two replications).
std::vector<MetricResult> compute_all(const ReplicationSummary& summary, const Trace& measured,
                                      const MetricConfig& cfg);

} // namespace twinwatch
