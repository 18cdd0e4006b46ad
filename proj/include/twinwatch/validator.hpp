#pragma once

#include "twinwatch/metrics.hpp"
#include "twinwatch/trace.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace twinwatch {

struct RunRecord;

/// Per-(metric, quantity) acceptance limits calibrated from normal operation.
struct ThresholdTable {
    std::map<std::pair<Metric, Quantity>, double> entries;
    std::vector<RunId> calibration_run_ids;

    bool contains(Metric m, Quantity q) const { return entries.count({m, q}) > 0; }
    double at(Metric m, Quantity q) const;
};

enum class VerdictPolicy { any_breach, majority_vote };

const char* to_string(VerdictPolicy p);
VerdictPolicy policy_from_string(const std::string& s);

struct Breach {
    Metric metric;
    Quantity quantity;
    double value;
    double threshold;
};

struct Verdict {
    RunId run_id = 0;
    bool valid = true;
    std::vector<Breach> breaches;
    Eigen::Index evaluated_pairs = 0;
    VerdictPolicy policy = VerdictPolicy::any_breach;
};

/// Threshold per (metric, quantity) = maximum value observed across the
/// normal runs. Absent (degenerate) results are simply not present in the
/// input. When `required` pairs are given, each must end up with a threshold
/// or a ConfigError is raised.
ThresholdTable calibrate_thresholds(const std::vector<MetricResult>& normal_results,
                                    const std::vector<std::pair<Metric, Quantity>>& required = {});

/// Breach iff value > threshold (strict, so the calibration extreme never
/// self-flags). Missing thresholds raise ConfigError.
Verdict evaluate(RunId run_id, const std::vector<MetricResult>& results, const ThresholdTable& table,
                 VerdictPolicy policy);

enum class WindowMode { per_run, time_based, event_based };

struct ExperimentWindow {
    WindowMode mode = WindowMode::per_run;
    double duration_s = 0.0;         // time_based
    std::string predicate_id;        // event_based; see register_delimit_predicate
};

struct ExperimentSegment {
    double t_start = 0.0;
    double t_end = 0.0; // half-open [t_start, t_end)
    RunId run_id = 0;   // per_run mode
};

/// Crossing detector taking (previous value, current value).
using DelimitPredicate = std::function<bool(double, double)>;

void register_delimit_predicate(const std::string& id, DelimitPredicate pred);

/// One segment per routine operation.
std::vector<ExperimentSegment> delimit(const std::vector<RunRecord>& runs, const ExperimentWindow& window);

/// Splits a continuous sample stream into time windows [t, t+d) or at the
/// transitions of a registered event predicate.
std::vector<ExperimentSegment> delimit(const Trace& stream, const ExperimentWindow& window);

} // namespace twinwatch
