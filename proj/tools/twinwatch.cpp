#include "twinwatch/errors.hpp"
#include "twinwatch/report.hpp"
#include "twinwatch/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace twinwatch;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> policy;
    std::optional<int> replications;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "scenario config JSON")->required();
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--out", opts.out_dir, "override the output directory");
    cmd->add_option("--policy", opts.policy, "verdict policy: any|majority");
    cmd->add_option("--replications", opts.replications, "override the replication count");
}

ScenarioConfig load_with_overrides(const CommonOpts& opts) {
    ScenarioConfig cfg = load_scenario_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out_dir) cfg.out_dir = *opts.out_dir;
    if (opts.policy) cfg.policy = policy_from_string(*opts.policy);
    if (opts.replications) cfg.replications = *opts.replications;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"twinwatch: continuous validation of a gantry-crane digital twin"};
    app.require_subcommand(1);

    CommonOpts run_opts, cal_opts, sens_opts, det_opts, est_opts;
    bool legacy = false;

    auto* run_cmd = app.add_subcommand("run", "run the continuous-validation scenario loop");
    add_common(run_cmd, run_opts);
    run_cmd->add_flag("--legacy", legacy, "derive virtual experiments from measured data");

    auto* cal_cmd = app.add_subcommand("calibrate", "run the normal-operation runs and emit thresholds");
    add_common(cal_cmd, cal_opts);

    auto* study_cmd = app.add_subcommand("study", "reproduce one of the evaluation studies");
    study_cmd->require_subcommand(1);
    auto* sens_cmd = study_cmd->add_subcommand("sensitivity", "rope-length fault grid");
    add_common(sens_cmd, sens_opts);
    auto* det_cmd = study_cmd->add_subcommand("detection", "velocity-deficit thresholds");
    add_common(det_cmd, det_opts);
    auto* est_cmd = study_cmd->add_subcommand("estimation", "parameter-estimation recovery");
    add_common(est_cmd, est_opts);

    std::string report_store, report_out = "out";
    std::int64_t report_run_id = 0;
    auto* report_cmd = app.add_subcommand("report", "emit JSON + CSV reports for a stored run");
    report_cmd->add_option("--store", report_store, "store directory")->required();
    report_cmd->add_option("--run", report_run_id, "run id")->required();
    report_cmd->add_option("--out", report_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            ScenarioConfig cfg = load_with_overrides(run_opts);
            if (legacy) cfg.legacy = true;
            const ScenarioResult result = run_scenario(cfg);
            write_scenario_report(result, cfg, cfg.out_dir);
            for (const auto& o : result.outcomes) {
                std::cout << "run " << o.run_index << " (id " << o.run_id << "): "
                          << (o.aborted ? "aborted"
                                        : (o.verdict_rendered ? (o.valid ? "valid" : "invalid") : "pending"));
                if (o.params_updated) std::cout << " -> twin v_max updated to " << o.updated_v_max;
                std::cout << "\n";
            }
            std::cout << "report: " << (cfg.out_dir / "scenario_report.json").string() << "\n";
            return result.exit_code;
        }
        if (*cal_cmd) {
            ScenarioConfig cfg = load_with_overrides(cal_opts);
            cfg.runs = cfg.calibration_runs;
            cfg.fault_schedule.clear();
            const ScenarioResult result = run_scenario(cfg);
            write_scenario_report(result, cfg, cfg.out_dir);
            std::cout << "thresholds: " << (cfg.out_dir / "thresholds.json").string() << "\n";
            return result.exit_code;
        }
        if (*sens_cmd) {
            const ScenarioConfig cfg = load_with_overrides(sens_opts);
            const StudyReport report = study_sensitivity(cfg);
            for (const auto& p : write_study_report(report, cfg.out_dir, cfg.study.histogram_bins))
                std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
        if (*det_cmd) {
            const ScenarioConfig cfg = load_with_overrides(det_opts);
            const StudyReport report = study_detection(cfg);
            for (const auto& p : write_study_report(report, cfg.out_dir, cfg.study.histogram_bins))
                std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
        if (*est_cmd) {
            const ScenarioConfig cfg = load_with_overrides(est_opts);
            const StudyReport report = study_estimation(cfg);
            for (const auto& p : write_study_report(report, cfg.out_dir, cfg.study.histogram_bins))
                std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
        if (*report_cmd) {
            const Store store(report_store);
            for (const auto& p : write_run_report(store, report_run_id, report_out))
                std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
