#include "twinwatch/scenario.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

namespace twinwatch {

namespace {

constexpr std::int64_t kEpochStart = 1767225600; // 2026-01-01T00:00:00Z, synthetic clock
constexpr std::int64_t kRunIntervalS = 60;

const std::vector<MoveSpec>& default_moves() {
    static const std::vector<MoveSpec> moves = {
        {0.05, 0.55}, {0.55, 0.10}, {0.10, 0.62}, {0.62, 0.05}};
    return moves;
}

PlantState initial_from_measured(const std::map<Quantity, Trace>& measured) {
    PlantState s;
    s.t_s = 0.0;
    s.x_m = measured.at(Quantity::position).v[0];
    s.v_mps = measured.at(Quantity::velocity).v[0];
    s.theta_rad = measured.at(Quantity::angular_position).v[0];
    s.omega_radps = measured.at(Quantity::angular_velocity).v[0];
    return s;
}

void store_trajectory(Store& store, RunId run_id, int machine_id, const Trajectory& traj) {
    SeriesKey key;
    key.run_id = run_id;
    key.machine_id = machine_id;
    key.quantity = Quantity::position;
    store.insert_series(SeriesTable::trajectory, key, traj.t, traj.x_ref);
    key.quantity = Quantity::velocity;
    store.insert_series(SeriesTable::trajectory, key, traj.t, traj.v_cmd);
}

void store_measured(Store& store, RunId run_id, int machine_id, const std::map<Quantity, Trace>& measured) {
    for (const auto& [q, tr] : measured) {
        SeriesKey key;
        key.run_id = run_id;
        key.machine_id = machine_id;
        key.quantity = q;
        store.insert_series(SeriesTable::measurement, key, tr.t, tr.v);
    }
}

void store_replications(Store& store, RunId run_id, int machine_id, const ReplicationResult& rep,
                        bool with_datapoints) {
    store.insert_simulation(run_id, machine_id, static_cast<int>(rep.replications.size()));
    if (!with_datapoints) return;
    for (std::size_t r = 0; r < rep.replications.size(); ++r) {
        for (Quantity q : {Quantity::position, Quantity::velocity, Quantity::angular_position,
                           Quantity::angular_velocity}) {
            SeriesKey key;
            key.run_id = run_id;
            key.machine_id = machine_id;
            key.quantity = q;
            key.replication = static_cast<int>(r);
            store.insert_series(SeriesTable::simulationdatapoint, key, rep.replications[r].t,
                                rep.replications[r].values(q));
        }
    }
}

nlohmann::json breaches_json(const std::vector<Breach>& breaches) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : breaches) {
        arr.push_back({{"metric", to_string(b.metric)},
                       {"quantity", to_string(b.quantity)},
                       {"value", b.value},
                       {"threshold", b.threshold}});
    }
    return arr;
}

} // namespace

const std::vector<Quantity>& validated_quantities() {
    static const std::vector<Quantity> qs = {Quantity::position, Quantity::velocity,
                                             Quantity::angular_position};
    return qs;
}

std::filesystem::path ScenarioConfig::resolved_store_dir() const {
    if (const char* env = std::getenv("TWINWATCH_STORE"); env && *env) return env;
    if (!store_dir.empty()) return store_dir;
    return out_dir / "store";
}

MoveSpec ScenarioConfig::move_for_run(int run_index) const {
    const auto& table = moves.empty() ? default_moves() : moves;
    return table[static_cast<std::size_t>(run_index - 1) % table.size()];
}

FaultSpec ScenarioConfig::fault_for_run(int run_index) const {
    for (const auto& w : fault_schedule)
        if (run_index >= w.from_run && run_index <= w.to_run) return w.fault;
    return {};
}

IcUncertainty ScenarioConfig::resolved_ic() const {
    return ic_uncertainty_is_default ? default_ic_uncertainty(noise, twin_params) : ic_uncertainty;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ConfigError("cannot open config file: " + json_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config JSON: " + std::string(e.what()));
    }

    ScenarioConfig cfg;
    try {
        if (j.contains("crane_params_file")) {
            std::filesystem::path p = j.at("crane_params_file").get<std::string>();
            if (p.is_relative()) p = json_path.parent_path() / p;
            cfg.twin_params = crane_params_from_json_file(p.string());
        } else if (j.contains("crane_params")) {
            const auto& cp = j.at("crane_params");
            cfg.twin_params.rope_length_m = cp.value("rope_length_m", cfg.twin_params.rope_length_m);
            cfg.twin_params.gravity_mps2 = cp.value("gravity_mps2", cfg.twin_params.gravity_mps2);
            cfg.twin_params.v_max_mps = cp.value("v_max_mps", cfg.twin_params.v_max_mps);
            cfg.twin_params.a_max_mps2 = cp.value("a_max_mps2", cfg.twin_params.a_max_mps2);
            cfg.twin_params.damping_per_s = cp.value("damping_per_s", cfg.twin_params.damping_per_s);
            cfg.twin_params.track_length_m = cp.value("track_length_m", cfg.twin_params.track_length_m);
        }
        validate(cfg.twin_params);

        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            cfg.noise.sigma_pos_m = n.value("sigma_pos_m", cfg.noise.sigma_pos_m);
            cfg.noise.sigma_vel_mps = n.value("sigma_vel_mps", cfg.noise.sigma_vel_mps);
            cfg.noise.sigma_theta_rad = n.value("sigma_theta_rad", cfg.noise.sigma_theta_rad);
            if (cfg.noise.sigma_pos_m < 0 || cfg.noise.sigma_vel_mps < 0 || cfg.noise.sigma_theta_rad < 0)
                throw ConfigError("noise sigmas must be >= 0");
        }
        if (j.contains("ic_uncertainty")) {
            const auto& ic = j.at("ic_uncertainty");
            cfg.ic_uncertainty.sigma_pos_m = ic.value("sigma_pos_m", 0.0);
            cfg.ic_uncertainty.sigma_vel_mps = ic.value("sigma_vel_mps", 0.0);
            cfg.ic_uncertainty.sigma_theta_rad = ic.value("sigma_theta_rad", 0.0);
            cfg.ic_uncertainty.sigma_omega_radps = ic.value("sigma_omega_radps", 0.0);
            cfg.ic_uncertainty_is_default = false;
        }

        cfg.replications = j.value("replications", cfg.replications);
        if (j.contains("policy")) cfg.policy = policy_from_string(j.at("policy").get<std::string>());
        cfg.runs = j.value("runs", cfg.runs);
        cfg.calibration_runs = j.value("calibration_runs", cfg.calibration_runs);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("store_dir")) cfg.store_dir = j.at("store_dir").get<std::string>();
        cfg.dt_s = j.value("dt_s", cfg.dt_s);
        cfg.sample_period_s = j.value("sample_period_s", cfg.sample_period_s);
        cfg.settle_tail_s = j.value("settle_tail_s", cfg.settle_tail_s);
        cfg.legacy = j.value("legacy", cfg.legacy);
        cfg.estimation_enabled = j.value("estimation_enabled", cfg.estimation_enabled);
        cfg.machine_name = j.value("machine_name", cfg.machine_name);
        cfg.metric_cfg.eps_sigma = j.value("eps_sigma", cfg.metric_cfg.eps_sigma);
        cfg.metric_cfg.eps_mean = j.value("eps_mean", cfg.metric_cfg.eps_mean);

        if (j.contains("moves")) {
            for (const auto& m : j.at("moves"))
                cfg.moves.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
        }
        if (j.contains("fault_schedule")) {
            for (const auto& w : j.at("fault_schedule")) {
                FaultWindow fw;
                fw.from_run = w.at("from_run").get<int>();
                fw.to_run = w.at("to_run").get<int>();
                fw.fault.kind = fault_kind_from_string(w.at("kind").get<std::string>());
                fw.fault.delta_fraction = w.value("delta", 0.0);
                cfg.fault_schedule.push_back(fw);
            }
        }
        if (j.contains("estimation")) {
            const auto& e = j.at("estimation");
            if (e.contains("policy")) {
                const std::string p = e.at("policy").get<std::string>();
                if (p == "reference_max") cfg.estimation_policy = InitialGuessPolicy::reference_max;
                else if (p == "fraction_of_reference") cfg.estimation_policy = InitialGuessPolicy::fraction_of_reference;
                else if (p == "measured_max_passthrough") cfg.estimation_policy = InitialGuessPolicy::measured_max_passthrough;
                else throw ConfigError("unknown estimation policy: " + p);
            }
            cfg.estimation_fraction = e.value("fraction", cfg.estimation_fraction);
            if (e.contains("quantities")) {
                cfg.estimation_quantities.clear();
                for (const auto& q : e.at("quantities"))
                    cfg.estimation_quantities.push_back(quantity_from_string(q.get<std::string>()));
            }
        }
        if (j.contains("study")) {
            const auto& s = j.at("study");
            cfg.study.sensitivity_delta_max = s.value("sensitivity_delta_max", cfg.study.sensitivity_delta_max);
            cfg.study.sensitivity_delta_step = s.value("sensitivity_delta_step", cfg.study.sensitivity_delta_step);
            cfg.study.sensitivity_replications = s.value("sensitivity_replications", cfg.study.sensitivity_replications);
            cfg.study.calibration_replications = s.value("calibration_replications", cfg.study.calibration_replications);
            if (s.contains("detection_deltas"))
                cfg.study.detection_deltas = s.at("detection_deltas").get<std::vector<double>>();
            cfg.study.detection_runs_per_delta = s.value("detection_runs_per_delta", cfg.study.detection_runs_per_delta);
            cfg.study.estimation_runs = s.value("estimation_runs", cfg.study.estimation_runs);
            cfg.study.estimation_delta = s.value("estimation_delta", cfg.study.estimation_delta);
            cfg.study.histogram_bins = s.value("histogram_bins", cfg.study.histogram_bins);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config value: " + std::string(e.what()));
    }

    if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
    for (std::size_t a = 0; a < cfg.fault_schedule.size(); ++a) {
        const auto& wa = cfg.fault_schedule[a];
        if (wa.from_run > wa.to_run) throw ConfigError("fault window with from_run > to_run");
        for (std::size_t b = a + 1; b < cfg.fault_schedule.size(); ++b) {
            const auto& wb = cfg.fault_schedule[b];
            if (wa.from_run <= wb.to_run && wb.from_run <= wa.to_run)
                throw ConfigError("fault schedule windows overlap");
        }
    }
    return cfg;
}

namespace {

struct RunContext {
    RunId run_id = 0;
    int run_index = 0;
    Trajectory padded;
    std::map<Quantity, Trace> measured;
    PlantState measured_initial;
    std::map<Quantity, ReplicationSummary> summaries;
    bool measured_ready = false;
    bool simulation_completed = false;
    bool metrics_done = false;
    std::vector<MetricResult> results; // validated quantities only
};

/// Wires controller, orchestrator, validator and estimator around the bus
/// and the store, one run at a time.
class ScenarioEngine {
public:
    ScenarioEngine(const ScenarioConfig& cfg, Store& store, EventBus& bus)
        : cfg_(cfg),
          store_(store),
          bus_(bus),
          twin_params_(cfg.twin_params),
          machine_id_(store.ensure_machine(cfg.machine_name)),
          orch_sub_(bus.subscribe(cfg.legacy ? topics::measured_ready : topics::trajectory_ready)),
          val_meas_sub_(bus.subscribe(topics::measured_ready)),
          val_sim_sub_(bus.subscribe(topics::simulation_completed)),
          verdict_sub_(bus.subscribe(topics::verdict)),
          run_collector_(bus.subscribe("run.*")),
          twin_collector_(bus.subscribe("twin.*")) {}

    RunOutcome execute_run(int run_index) {
        RunOutcome outcome;
        outcome.run_index = run_index;
        outcome.fault = cfg_.fault_for_run(run_index);
        try {
            run_once(run_index, outcome);
        } catch (const std::exception& e) {
            outcome.aborted = true;
            outcome.abort_reason = e.what();
        }
        collect_events();
        return outcome;
    }

    /// Builds the threshold table from the calibration runs and renders their
    /// deferred verdicts.
    void finalize_calibration(std::vector<RunOutcome>& outcomes) {
        std::vector<MetricResult> all;
        for (RunId id : calibration_order_) {
            const auto& res = contexts_.at(id).results;
            all.insert(all.end(), res.begin(), res.end());
        }
        thresholds_ = calibrate_thresholds(all);
        thresholds_ready_ = true;
        for (RunId id : calibration_order_) {
            render_verdict(contexts_.at(id));
            pump_estimator(outcomes);
            apply_outcome(outcomes, contexts_.at(id));
        }
        collect_events();
    }

    void post_run(std::vector<RunOutcome>& outcomes) {
        pump_estimator(outcomes);
        collect_events();
    }

    void apply_outcome(std::vector<RunOutcome>& outcomes, const RunContext& ctx) {
        for (auto& o : outcomes) {
            if (o.run_index != ctx.run_index) continue;
            if (auto it = verdicts_.find(ctx.run_id); it != verdicts_.end()) {
                o.run_id = ctx.run_id;
                o.valid = it->second.valid;
                o.verdict_rendered = true;
                o.breaches = it->second.breaches;
            }
        }
    }

    const ThresholdTable& thresholds() const { return thresholds_; }
    const CraneParams& twin_params() const { return twin_params_; }
    bool needs_model_revision() const { return needs_model_revision_; }
    std::vector<Event> take_events() { return std::move(events_); }
    const std::map<RunId, Verdict>& verdicts() const { return verdicts_; }
    RunContext& context(RunId id) { return contexts_.at(id); }

    std::map<int, std::pair<bool, double>> updates_by_run_index_; // run_index -> (updated, new v_max)

private:
    void run_once(int run_index, RunOutcome& outcome) {
        const MoveSpec move = cfg_.move_for_run(run_index);
        const FaultSpec fault = outcome.fault;

        RunRecord rec;
        rec.machine_id = machine_id_;
        rec.start_time_unix_s = kEpochStart + static_cast<std::int64_t>(run_index) * kRunIntervalS;
        rec.fault = fault;
        rec.status = RunStatus::planned;
        const RunId run_id = store_.insert_run(rec);
        outcome.run_id = run_id;

        RunContext& ctx = contexts_[run_id];
        ctx.run_id = run_id;
        ctx.run_index = run_index;
        run_by_index_[run_index] = run_id;

        // controller: plan with the twin's current belief, then enact on the
        // physical plant (base params + fault; the plant does not follow twin
        // updates)
        Trajectory traj = generate_trajectory(move.start_m, move.end_m, twin_params_, cfg_.sample_period_s);
        traj.run_id = run_id;
        store_trajectory(store_, run_id, machine_id_, traj);
        ctx.padded = with_settle_tail(traj, cfg_.settle_tail_s, cfg_.sample_period_s);

        const CraneParams plant = apply_fault(cfg_.twin_params, fault);
        NoiseSpec noise = cfg_.noise;
        noise.seed = cfg_.seed;
        const EnactResult enacted = enact(ctx.padded, plant, noise, cfg_.dt_s, cfg_.sample_period_s);
        ctx.measured = enacted.measured;
        ctx.measured_initial = initial_from_measured(ctx.measured);
        store_measured(store_, run_id, machine_id_, ctx.measured);
        store_.update_run_status(run_id, RunStatus::enacted);

        bus_.publish(topics::trajectory_ready,
                     {{"run_id", run_id},
                      {"samples", ctx.padded.size()},
                      {"v_max_used", ctx.padded.v_max_used_mps},
                      {"initial",
                       {{"x_m", ctx.measured_initial.x_m},
                        {"v_mps", ctx.measured_initial.v_mps},
                        {"theta_rad", ctx.measured_initial.theta_rad},
                        {"omega_radps", ctx.measured_initial.omega_radps}}}});
        if (!cfg_.legacy) pump_orchestrator();
        bus_.publish(topics::measured_ready, {{"run_id", run_id}});
        if (cfg_.legacy) pump_orchestrator();
        pump_validator();

        if (auto it = verdicts_.find(run_id); it != verdicts_.end()) {
            outcome.valid = it->second.valid;
            outcome.verdict_rendered = true;
            outcome.breaches = it->second.breaches;
        }
    }

    void pump_orchestrator() {
        for (auto ev = orch_sub_.poll(); ev; ev = orch_sub_.poll()) {
            const RunId run_id = ev->payload.at("run_id").get<RunId>();
            RunContext& ctx = contexts_.at(run_id);

            Trajectory input;
            if (cfg_.legacy) {
                // legacy systems: re-derive the virtual experiment input from
                // the logged enactment instead of a pre-generated trajectory
                const Trace& mx = ctx.measured.at(Quantity::position);
                const Trace& mv = ctx.measured.at(Quantity::velocity);
                input.run_id = run_id;
                input.t = mv.t;
                input.x_ref = mx.v;
                input.v_cmd = mv.v;
                input.v_max_used_mps = std::max(twin_params_.v_max_mps, mv.v.abs().maxCoeff());
            } else {
                input = ctx.padded;
            }

            ReplicationPlan plan;
            plan.run_id = run_id;
            plan.replications = cfg_.replications;
            plan.ic_uncertainty = cfg_.resolved_ic();
            plan.seed = cfg_.seed;

            const ReplicationResult rep = run_replications(input, ctx.measured_initial, twin_params_, plan,
                                                           cfg_.dt_s, cfg_.sample_period_s);
            ctx.summaries = rep.summaries;
            store_replications(store_, run_id, machine_id_, rep, cfg_.store_sim_datapoints);
            bus_.publish(topics::simulation_completed,
                         {{"run_id", run_id}, {"replications", plan.replications}});
        }
    }

    void pump_validator() {
        for (auto ev = val_meas_sub_.poll(); ev; ev = val_meas_sub_.poll())
            contexts_.at(ev->payload.at("run_id").get<RunId>()).measured_ready = true;
        for (auto ev = val_sim_sub_.poll(); ev; ev = val_sim_sub_.poll())
            contexts_.at(ev->payload.at("run_id").get<RunId>()).simulation_completed = true;

        for (auto& [run_id, ctx] : contexts_) {
            if (ctx.metrics_done || !ctx.measured_ready || !ctx.simulation_completed) continue;
            const Eigen::ArrayXd& grid = ctx.summaries.at(Quantity::position).t;
            for (Quantity q : {Quantity::position, Quantity::velocity, Quantity::angular_position,
                               Quantity::angular_velocity}) {
                const Trace on_grid = resample(ctx.measured.at(q), grid);
                for (const MetricResult& r : compute_all(ctx.summaries.at(q), on_grid, cfg_.metric_cfg)) {
                    store_.insert_metric(r);
                    if (std::find(validated_quantities().begin(), validated_quantities().end(), q) !=
                        validated_quantities().end())
                        ctx.results.push_back(r);
                }
            }
            ctx.metrics_done = true;
            store_.update_run_status(run_id, RunStatus::simulated);

            if (thresholds_ready_)
                render_verdict(ctx);
            else
                calibration_order_.push_back(run_id);
        }
    }

    void render_verdict(RunContext& ctx) {
        const Verdict v = evaluate(ctx.run_id, ctx.results, thresholds_, cfg_.policy);
        verdicts_[ctx.run_id] = v;
        bus_.publish(topics::verdict, {{"run_id", ctx.run_id},
                                       {"status", v.valid ? "valid" : "invalid"},
                                       {"breaches", breaches_json(v.breaches)}});
        store_.update_run_status(ctx.run_id, RunStatus::validated);
    }

    void pump_estimator(std::vector<RunOutcome>& outcomes) {
        for (auto ev = verdict_sub_.poll(); ev; ev = verdict_sub_.poll()) {
            if (ev->payload.at("status").get<std::string>() != "invalid") continue;
            const RunId run_id = ev->payload.at("run_id").get<RunId>();
            const int run_index = contexts_.at(run_id).run_index;

            RunOutcome* outcome = nullptr;
            for (auto& o : outcomes)
                if (o.run_index == run_index) outcome = &o;

            if (!cfg_.estimation_enabled) continue;
            if (last_update_run_index_ >= 0 && run_index == last_update_run_index_ + 1) {
                // the previous update did not restore validity: structural
                // change suspected, alternative-model search is out of scope
                needs_model_revision_ = true;
                continue;
            }

            EstimationProblem problem;
            problem.run_id = run_id;
            problem.free_params = {"v_max_mps"};
            problem.quantities = cfg_.estimation_quantities;
            problem.policy = cfg_.estimation_policy;
            problem.policy_fraction = cfg_.estimation_fraction;

            const RunRecord rec = store_.run(run_id);
            if (outcome) outcome->estimation_attempted = true;
            const EstimationResult est = estimate_parameters(rec, problem, store_, twin_params_, cfg_.dt_s,
                                                             cfg_.sample_period_s);
            if (!est.converged) {
                needs_model_revision_ = true;
                continue;
            }
            const double old_v = twin_params_.v_max_mps;
            twin_params_ = params_with(twin_params_, problem.free_params, est.estimate);
            bus_.publish(topics::params_updated, {{"run_id", run_id},
                                                  {"param", "v_max_mps"},
                                                  {"old", old_v},
                                                  {"new", twin_params_.v_max_mps},
                                                  {"cost", est.cost},
                                                  {"iterations", est.iterations}});
            store_.update_run_status(run_id, RunStatus::recalibrated);
            last_update_run_index_ = run_index;
            updates_by_run_index_[run_index] = {true, twin_params_.v_max_mps};
            if (outcome) {
                outcome->params_updated = true;
                outcome->updated_v_max = twin_params_.v_max_mps;
            }
        }
    }

    void collect_events() {
        for (auto ev = run_collector_.poll(); ev; ev = run_collector_.poll()) events_.push_back(*ev);
        for (auto ev = twin_collector_.poll(); ev; ev = twin_collector_.poll()) events_.push_back(*ev);
        std::sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.seq < b.seq; });
    }

    const ScenarioConfig& cfg_;
    Store& store_;
    EventBus& bus_;
    CraneParams twin_params_;
    int machine_id_;
    EventBus::Subscription orch_sub_, val_meas_sub_, val_sim_sub_, verdict_sub_;
    EventBus::Subscription run_collector_, twin_collector_;
    std::map<RunId, RunContext> contexts_;
    std::map<int, RunId> run_by_index_;
    std::vector<RunId> calibration_order_;
    ThresholdTable thresholds_;
    bool thresholds_ready_ = false;
    std::map<RunId, Verdict> verdicts_;
    bool needs_model_revision_ = false;
    int last_update_run_index_ = -1;
    std::vector<Event> events_;
};

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
    if (cfg.runs < 1) throw ConfigError("run_scenario: runs must be >= 1");
    std::filesystem::create_directories(cfg.out_dir);

    Store store(cfg.resolved_store_dir());
    EventBus bus;
    ScenarioEngine engine(cfg, store, bus);

    ScenarioResult result;
    const int calibration_runs = std::min(cfg.calibration_runs, cfg.runs);
    for (int idx = 1; idx <= cfg.runs; ++idx) {
        result.outcomes.push_back(engine.execute_run(idx));
        if (idx == calibration_runs) engine.finalize_calibration(result.outcomes);
        engine.post_run(result.outcomes);
        // fold the verdict (possibly rendered during this pump) into the outcome
        auto& o = result.outcomes.back();
        if (!o.aborted && o.run_id != 0) engine.apply_outcome(result.outcomes, engine.context(o.run_id));
    }

    result.thresholds = engine.thresholds();
    result.final_twin_params = engine.twin_params();
    result.needs_model_revision = engine.needs_model_revision();
    result.events = engine.take_events();
    for (auto& o : result.outcomes) {
        if (o.params_updated) continue;
        if (auto it = engine.updates_by_run_index_.find(o.run_index); it != engine.updates_by_run_index_.end()) {
            o.params_updated = it->second.first;
            o.updated_v_max = it->second.second;
        }
    }

    const bool any_abort = std::any_of(result.outcomes.begin(), result.outcomes.end(),
                                       [](const RunOutcome& o) { return o.aborted; });
    bool ends_invalid = false;
    for (const auto& o : result.outcomes)
        if (o.verdict_rendered) ends_invalid = !o.valid;
    if (any_abort)
        result.exit_code = 4;
    else if (result.needs_model_revision || ends_invalid)
        result.exit_code = 2;
    else
        result.exit_code = 0;
    return result;
}

StudyReport study_sensitivity(const ScenarioConfig& cfg) {
    const StudyOptions& so = cfg.study;
    std::filesystem::create_directories(cfg.out_dir);
    Store store(cfg.resolved_store_dir());
    const int machine_id = store.ensure_machine(cfg.machine_name);
    const MoveSpec move = cfg.move_for_run(1);
    const IcUncertainty ic = cfg.resolved_ic();

    StudyReport report;
    report.study_id = "sensitivity";
    report.seed = cfg.seed;

    // the single reference trajectory, enacted once on the nominal plant
    RunRecord rec;
    rec.machine_id = machine_id;
    rec.start_time_unix_s = kEpochStart;
    rec.status = RunStatus::planned;
    const RunId cal_run = store.insert_run(rec);
    report.run_ids.push_back(cal_run);

    Trajectory traj = generate_trajectory(move.start_m, move.end_m, cfg.twin_params, cfg.sample_period_s);
    traj.run_id = cal_run;
    store_trajectory(store, cal_run, machine_id, traj);
    const Trajectory padded = with_settle_tail(traj, cfg.settle_tail_s, cfg.sample_period_s);

    NoiseSpec noise = cfg.noise;
    noise.seed = cfg.seed;
    const EnactResult cal_enact = enact(padded, cfg.twin_params, noise, cfg.dt_s, cfg.sample_period_s);
    store_measured(store, cal_run, machine_id, cal_enact.measured);
    store.update_run_status(cal_run, RunStatus::enacted);

    ReplicationPlan cal_plan;
    cal_plan.run_id = cal_run;
    cal_plan.replications = so.calibration_replications;
    cal_plan.ic_uncertainty = ic;
    cal_plan.seed = cfg.seed;
    const PlantState cal_initial = initial_from_measured(cal_enact.measured);
    const ReplicationResult cal_rep =
        run_replications(padded, cal_initial, cfg.twin_params, cal_plan, cfg.dt_s, cfg.sample_period_s);
    store_replications(store, cal_run, machine_id, cal_rep, false);
    store.update_run_status(cal_run, RunStatus::simulated);

    // thresholds: every nominal replication, viewed through the measurement
    // channel, scored against the replication ensemble
    const Quantity q = Quantity::angular_position;
    const ReplicationSummary& cal_summary = cal_rep.summaries.at(q);
    std::vector<MetricResult> cal_results;
    const StreamKey cal_key = StreamKey(cfg.seed).with("sensitivity_cal");
    for (std::size_t r = 0; r < cal_rep.replications.size(); ++r) {
        Trace pseudo = cal_rep.replications[r].trace(cal_run, q, TraceKind::measured);
        if (cfg.noise.sigma_theta_rad > 0.0) {
            auto eng = cal_key.with(static_cast<std::uint64_t>(r)).engine();
            std::normal_distribution<double> dist(0.0, cfg.noise.sigma_theta_rad);
            for (Eigen::Index i = 0; i < pseudo.size(); ++i) pseudo.v[i] += dist(eng);
        }
        const auto results = compute_all(cal_summary, pseudo, cfg.metric_cfg);
        cal_results.insert(cal_results.end(), results.begin(), results.end());
    }
    const ThresholdTable thresholds = calibrate_thresholds(cal_results);

    // the fault grid, symmetric around zero
    std::vector<double> deltas;
    const int steps = static_cast<int>(std::llround(so.sensitivity_delta_max / so.sensitivity_delta_step));
    for (int k = -steps; k <= steps; ++k) deltas.push_back(static_cast<double>(k) * so.sensitivity_delta_step);

    for (const double delta : deltas) {
        FaultSpec fault;
        fault.kind = FaultKind::RopeLengthError;
        fault.delta_fraction = delta;

        RunRecord drec;
        drec.machine_id = machine_id;
        drec.start_time_unix_s = kEpochStart + static_cast<std::int64_t>(report.run_ids.size()) * kRunIntervalS;
        drec.fault = fault;
        drec.status = RunStatus::planned;
        const RunId run_id = store.insert_run(drec);
        report.run_ids.push_back(run_id);

        Trajectory dtraj = traj;
        dtraj.run_id = run_id;
        store_trajectory(store, run_id, machine_id, dtraj);
        const Trajectory dpadded = with_settle_tail(dtraj, cfg.settle_tail_s, cfg.sample_period_s);

        const CraneParams plant = apply_fault(cfg.twin_params, fault);
        const EnactResult enacted = enact(dpadded, plant, noise, cfg.dt_s, cfg.sample_period_s);
        store_measured(store, run_id, machine_id, enacted.measured);
        store.update_run_status(run_id, RunStatus::enacted);

        ReplicationPlan plan;
        plan.run_id = run_id;
        plan.replications = so.sensitivity_replications;
        plan.ic_uncertainty = ic;
        plan.seed = cfg.seed;
        const ReplicationResult rep = run_replications(dpadded, initial_from_measured(enacted.measured),
                                                       cfg.twin_params, plan, cfg.dt_s, cfg.sample_period_s);
        store_replications(store, run_id, machine_id, rep, false);

        const Trace on_grid = resample(enacted.measured.at(q), rep.summaries.at(q).t);
        for (const MetricResult& r : compute_all(rep.summaries.at(q), on_grid, cfg.metric_cfg)) {
            store.insert_metric(r);
            StudyRow row;
            row.delta = delta;
            row.is_normal = delta == 0.0;
            row.metric = r.metric;
            row.quantity = q;
            row.value = r.value;
            row.threshold = thresholds.contains(r.metric, q) ? thresholds.at(r.metric, q) : 0.0;
            row.breach = thresholds.contains(r.metric, q) && r.value > row.threshold;
            row.run_ids = {run_id};
            report.rows.push_back(row);
        }
        store.update_run_status(run_id, RunStatus::validated);
    }
    return report;
}

StudyReport study_detection(const ScenarioConfig& cfg) {
    const StudyOptions& so = cfg.study;

    ScenarioConfig run_cfg = cfg;
    run_cfg.estimation_enabled = false; // detection only; no twin evolution
    run_cfg.store_sim_datapoints = false;
    run_cfg.fault_schedule.clear();
    const int normal_runs = cfg.calibration_runs;
    run_cfg.runs = normal_runs + static_cast<int>(so.detection_deltas.size()) * so.detection_runs_per_delta;
    run_cfg.calibration_runs = normal_runs;
    for (std::size_t d = 0; d < so.detection_deltas.size(); ++d) {
        FaultWindow w;
        w.from_run = normal_runs + static_cast<int>(d) * so.detection_runs_per_delta + 1;
        w.to_run = normal_runs + static_cast<int>(d + 1) * so.detection_runs_per_delta;
        w.fault.kind = FaultKind::VelocityDeficit;
        w.fault.delta_fraction = so.detection_deltas[d];
        run_cfg.fault_schedule.push_back(w);
    }

    const ScenarioResult result = run_scenario(run_cfg);

    StudyReport report;
    report.study_id = "detection";
    report.seed = cfg.seed;

    std::vector<std::pair<double, std::vector<const RunOutcome*>>> conditions;
    conditions.emplace_back(0.0, std::vector<const RunOutcome*>{});
    for (const double delta : so.detection_deltas) conditions.emplace_back(delta, std::vector<const RunOutcome*>{});
    for (const auto& o : result.outcomes) {
        report.run_ids.push_back(o.run_id);
        for (auto& [delta, members] : conditions) {
            const bool is_normal = o.fault.kind == FaultKind::None;
            if ((is_normal && delta == 0.0) ||
                (!is_normal && o.fault.delta_fraction == delta && delta != 0.0))
                members.push_back(&o);
        }
    }

    for (const auto& [delta, members] : conditions) {
        for (Metric m : kAllMetrics) {
            for (Quantity q : validated_quantities()) {
                StudyRow row;
                row.delta = delta;
                row.is_normal = delta == 0.0;
                row.metric = m;
                row.quantity = q;
                row.runs_evaluated = static_cast<int>(members.size());
                int breaches = 0;
                for (const RunOutcome* o : members) {
                    row.run_ids.push_back(o->run_id);
                    for (const Breach& b : o->breaches)
                        if (b.metric == m && b.quantity == q) ++breaches;
                }
                row.value = static_cast<double>(breaches);
                row.threshold = result.thresholds.contains(m, q) ? result.thresholds.at(m, q) : 0.0;
                row.breach = breaches > 0;
                report.rows.push_back(row);
            }
        }
    }
    return report;
}

StudyReport study_estimation(const ScenarioConfig& cfg) {
    const StudyOptions& so = cfg.study;
    std::filesystem::create_directories(cfg.out_dir);
    Store store(cfg.resolved_store_dir());
    const int machine_id = store.ensure_machine(cfg.machine_name);
    const MoveSpec move = cfg.move_for_run(1);

    FaultSpec fault;
    fault.kind = FaultKind::VelocityDeficit;
    fault.delta_fraction = so.estimation_delta;
    const CraneParams plant = apply_fault(cfg.twin_params, fault);
    const double true_v_max = plant.v_max_mps;

    StudyReport report;
    report.study_id = "estimation";
    report.seed = cfg.seed;

    // the divergent runs
    std::vector<RunRecord> recs;
    NoiseSpec noise = cfg.noise;
    noise.seed = cfg.seed;
    for (int k = 0; k < so.estimation_runs; ++k) {
        RunRecord rec;
        rec.machine_id = machine_id;
        rec.start_time_unix_s = kEpochStart + static_cast<std::int64_t>(k) * kRunIntervalS;
        rec.fault = fault;
        rec.status = RunStatus::planned;
        rec.run_id = store.insert_run(rec);
        report.run_ids.push_back(rec.run_id);

        Trajectory traj = generate_trajectory(move.start_m, move.end_m, cfg.twin_params, cfg.sample_period_s);
        traj.run_id = rec.run_id;
        store_trajectory(store, rec.run_id, machine_id, traj);
        const Trajectory padded = with_settle_tail(traj, cfg.settle_tail_s, cfg.sample_period_s);
        const EnactResult enacted = enact(padded, plant, noise, cfg.dt_s, cfg.sample_period_s);
        store_measured(store, rec.run_id, machine_id, enacted.measured);
        store.update_run_status(rec.run_id, RunStatus::enacted);
        recs.push_back(store.run(rec.run_id));
    }

    const struct {
        InitialGuessPolicy policy;
        double fraction;
    } policies[] = {
        {InitialGuessPolicy::reference_max, 1.0},
        {InitialGuessPolicy::fraction_of_reference, cfg.estimation_fraction},
    };

    for (const auto& pol : policies) {
        PolicySummary summary;
        summary.policy = pol.policy;
        summary.fraction = pol.fraction;
        summary.true_value = true_v_max;

        for (const RunRecord& rec : recs) {
            EstimationProblem problem;
            problem.run_id = rec.run_id;
            problem.free_params = {"v_max_mps"};
            problem.quantities = cfg.estimation_quantities;
            problem.policy = pol.policy;
            problem.policy_fraction = pol.fraction;
            const EstimationResult est =
                estimate_parameters(rec, problem, store, cfg.twin_params, cfg.dt_s, cfg.sample_period_s);
            summary.estimates.push_back(est.estimate[0]);
            summary.run_ids.push_back(rec.run_id);
        }

        const auto n = static_cast<double>(summary.estimates.size());
        double mean = 0.0;
        for (double e : summary.estimates) mean += e;
        mean /= n;
        double var = 0.0, max_err = 0.0;
        for (double e : summary.estimates) {
            var += (e - mean) * (e - mean);
            max_err = std::max(max_err, std::abs(e - true_v_max) / true_v_max);
        }
        summary.mean = mean;
        summary.stddev = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        summary.mean_signed_error = (mean - true_v_max) / true_v_max;
        summary.max_abs_error = max_err;
        report.policies.push_back(summary);
    }
    return report;
}

} // namespace twinwatch
