#pragma once

#include "twinwatch/crane.hpp"
#include "twinwatch/estimation.hpp"
#include "twinwatch/event_bus.hpp"
#include "twinwatch/metrics.hpp"
#include "twinwatch/replication.hpp"
#include "twinwatch/store.hpp"
#include "twinwatch/trajectory.hpp"
#include "twinwatch/validator.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace twinwatch {

struct MoveSpec {
    double start_m = 0.05;
    double end_m = 0.55;
};

/// One contiguous block of runs operating under a fault (1-based, inclusive).
struct FaultWindow {
    int from_run = 0;
    int to_run = 0;
    FaultSpec fault;
};

struct StudyOptions {
    // sensitivity (rope-length grid)
    double sensitivity_delta_max = 0.10;
    double sensitivity_delta_step = 0.005;
    int sensitivity_replications = 30;
    int calibration_replications = 50;
    // detection (velocity deficits)
    std::vector<double> detection_deltas = {0.02, 0.05, 0.10, 0.15, 0.20};
    int detection_runs_per_delta = 10;
    // estimation
    int estimation_runs = 50;
    double estimation_delta = 0.10;
    int histogram_bins = 12;
};

struct ScenarioConfig {
    CraneParams twin_params;
    NoiseSpec noise;
    int replications = 30;
    IcUncertainty ic_uncertainty;
    bool ic_uncertainty_is_default = true; // derive from noise + params when true
    VerdictPolicy policy = VerdictPolicy::any_breach;
    std::vector<FaultWindow> fault_schedule;
    int runs = 10;
    int calibration_runs = 10;
    std::uint64_t seed = 42;
    std::filesystem::path out_dir = "out";
    std::filesystem::path store_dir; // empty: out_dir / "store"; TWINWATCH_STORE overrides
    std::vector<MoveSpec> moves;     // empty: built-in cycling schedule
    double dt_s = 0.001;
    double sample_period_s = 0.01;
    double settle_tail_s = 2.0;
    bool legacy = false; // infer the virtual experiment from measured data
    bool estimation_enabled = true;
    bool store_sim_datapoints = true;
    std::string machine_name = "crane-01";
    MetricConfig metric_cfg;
    InitialGuessPolicy estimation_policy = InitialGuessPolicy::fraction_of_reference;
    double estimation_fraction = 0.90;
    std::vector<Quantity> estimation_quantities = {Quantity::position, Quantity::velocity};
    StudyOptions study;

    std::filesystem::path resolved_store_dir() const;
    MoveSpec move_for_run(int run_index) const; // 1-based
    FaultSpec fault_for_run(int run_index) const;
    IcUncertainty resolved_ic() const;
};

ScenarioConfig load_scenario_config(const std::filesystem::path& json_path);

/// Quantities that carry thresholds; angular velocity is computed and stored
/// but not part of the verdict.
const std::vector<Quantity>& validated_quantities();

struct RunOutcome {
    RunId run_id = 0;
    int run_index = 0;
    FaultSpec fault;
    bool valid = true;
    bool verdict_rendered = false;
    std::vector<Breach> breaches;
    bool estimation_attempted = false;
    bool params_updated = false;
    double updated_v_max = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

struct ScenarioResult {
    std::vector<RunOutcome> outcomes;
    ThresholdTable thresholds;
    CraneParams final_twin_params;
    bool needs_model_revision = false;
    int exit_code = 0;
    std::vector<Event> events; // every bus event, seq order
};

/// Drives the full loop per run: trajectory with the CURRENT twin params ->
/// enactment on the (possibly faulted) plant -> replicated twin simulations ->
/// metrics -> verdict -> on invalid, parameter estimation and a twin update
/// applied to subsequent runs.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

struct StudyRow {
    double delta = 0.0;
    bool is_normal = false;
    Metric metric = Metric::rmse;
    Quantity quantity = Quantity::position;
    double value = 0.0;     // metric value, or breach count for detection
    double threshold = 0.0;
    bool breach = false;
    int runs_evaluated = 1; // detection: runs per condition
    std::vector<RunId> run_ids;
};

struct PolicySummary {
    InitialGuessPolicy policy = InitialGuessPolicy::reference_max;
    double fraction = 1.0;
    double mean = 0.0;
    double stddev = 0.0;
    double mean_signed_error = 0.0; // (mean - truth) / truth
    double max_abs_error = 0.0;     // max over runs of |est - truth| / truth
    double true_value = 0.0;
    std::vector<double> estimates; // per run, run order
    std::vector<RunId> run_ids;
};

struct StudyReport {
    std::string study_id;
    std::uint64_t seed = 0;
    std::vector<StudyRow> rows;
    std::vector<PolicySummary> policies; // estimation study only
    std::vector<RunId> run_ids;
};

/// Rope-length sensitivity grid: one reference trajectory, thresholds from
/// the calibration replications, all metrics on angular position per delta.
StudyReport study_sensitivity(const ScenarioConfig& cfg);

/// Velocity-deficit detection: thresholds from normal runs, then per delta a
/// batch of faulted runs; reports breach counts per (metric, quantity).
StudyReport study_detection(const ScenarioConfig& cfg);

/// Estimation recovery at a fixed deficit, under both initial-guess policies.
StudyReport study_estimation(const ScenarioConfig& cfg);

} // namespace twinwatch
