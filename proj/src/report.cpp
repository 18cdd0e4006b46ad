#include "twinwatch/report.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace twinwatch {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

std::string csv_bool(bool b) { return b ? "1" : "0"; }

} // namespace

const std::string& study_report_schema() {
    static const std::string schema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "twinwatch study report",
  "type": "object",
  "required": ["study", "seed", "rows", "run_ids"],
  "properties": {
    "study": {"type": "string", "enum": ["sensitivity", "detection", "estimation"]},
    "seed": {"type": "integer", "minimum": 0},
    "run_ids": {"type": "array", "items": {"type": "integer"}},
    "rows": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["metric", "quantity", "value", "threshold", "breach"],
        "properties": {
          "delta": {"type": "number"},
          "normal": {"type": "boolean"},
          "metric": {"type": "string", "enum": ["rmse", "mean_ned", "total_ned", "avg_rel_err", "max_rel_err"]},
          "quantity": {"type": "string", "enum": ["position", "velocity", "angular_position", "angular_velocity"]},
          "value": {"type": "number"},
          "threshold": {"type": "number"},
          "breach": {"type": "boolean"},
          "runs_evaluated": {"type": "integer", "minimum": 0},
          "run_ids": {"type": "array", "items": {"type": "integer"}}
        }
      }
    },
    "policies": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["policy", "mean", "stddev", "mean_signed_error", "true_value", "estimates"],
        "properties": {
          "policy": {"type": "string"},
          "fraction": {"type": "number"},
          "mean": {"type": "number"},
          "stddev": {"type": "number"},
          "mean_signed_error": {"type": "number"},
          "max_abs_error": {"type": "number"},
          "true_value": {"type": "number"},
          "estimates": {"type": "array", "items": {"type": "number"}},
          "run_ids": {"type": "array", "items": {"type": "integer"}}
        }
      }
    }
  }
}
)";
    return schema;
}

nlohmann::json study_report_json(const StudyReport& report) {
    nlohmann::json j;
    j["study"] = report.study_id;
    j["seed"] = report.seed;
    j["run_ids"] = report.run_ids;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json r;
        r["delta"] = row.delta;
        r["normal"] = row.is_normal;
        r["metric"] = to_string(row.metric);
        r["quantity"] = to_string(row.quantity);
        r["value"] = row.value;
        r["threshold"] = row.threshold;
        r["breach"] = row.breach;
        r["runs_evaluated"] = row.runs_evaluated;
        r["run_ids"] = row.run_ids;
        j["rows"].push_back(r);
    }
    if (!report.policies.empty()) {
        j["policies"] = nlohmann::json::array();
        for (const auto& p : report.policies) {
            nlohmann::json pj;
            pj["policy"] = to_string(p.policy);
            pj["fraction"] = p.fraction;
            pj["mean"] = p.mean;
            pj["stddev"] = p.stddev;
            pj["mean_signed_error"] = p.mean_signed_error;
            pj["max_abs_error"] = p.max_abs_error;
            pj["true_value"] = p.true_value;
            pj["estimates"] = p.estimates;
            pj["run_ids"] = p.run_ids;
            j["policies"].push_back(pj);
        }
    }
    return j;
}

std::vector<std::filesystem::path> write_study_report(const StudyReport& report,
                                                      const std::filesystem::path& out_dir,
                                                      int histogram_bins) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;

    const auto json_path = out_dir / ("study_" + report.study_id + ".json");
    write_text(json_path, study_report_json(report).dump(2) + "\n");
    written.push_back(json_path);

    const auto schema_path = out_dir / "study_report.schema.json";
    write_text(schema_path, study_report_schema());
    written.push_back(schema_path);

    const auto csv_path = out_dir / ("study_" + report.study_id + ".csv");
    std::string csv;
    if (report.study_id == "detection")
        csv = "delta,normal,metric,quantity,breaches,runs,threshold\n";
    else
        csv = "delta,metric,quantity,value,threshold,breach\n";
    for (const auto& row : report.rows) {
        if (report.study_id == "detection") {
            csv += format_double(row.delta);
            csv += ",";
            csv += csv_bool(row.is_normal);
            csv += ",";
            csv += to_string(row.metric);
            csv += ",";
            csv += to_string(row.quantity);
            csv += ",";
            csv += format_double(row.value);
            csv += ",";
            csv += std::to_string(row.runs_evaluated);
            csv += ",";
            csv += format_double(row.threshold);
            csv += "\n";
        } else {
            csv += format_double(row.delta);
            csv += ",";
            csv += to_string(row.metric);
            csv += ",";
            csv += to_string(row.quantity);
            csv += ",";
            csv += format_double(row.value);
            csv += ",";
            csv += format_double(row.threshold);
            csv += ",";
            csv += csv_bool(row.breach);
            csv += "\n";
        }
    }
    write_text(csv_path, csv);
    written.push_back(csv_path);

    if (!report.policies.empty()) {
        // per-run estimates
        const auto est_path = out_dir / "study_estimation_runs.csv";
        std::string est = "policy,fraction,run_id,estimate,true_value,signed_error\n";
        for (const auto& p : report.policies) {
            for (std::size_t i = 0; i < p.estimates.size(); ++i) {
                est += to_string(p.policy);
                est += ",";
                est += format_double(p.fraction);
                est += ",";
                est += std::to_string(p.run_ids[i]);
                est += ",";
                est += format_double(p.estimates[i]);
                est += ",";
                est += format_double(p.true_value);
                est += ",";
                est += format_double((p.estimates[i] - p.true_value) / p.true_value);
                est += "\n";
            }
        }
        write_text(est_path, est);
        written.push_back(est_path);

        // shared-range histogram bins
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& p : report.policies) {
            for (double e : p.estimates) {
                lo = std::min(lo, e);
                hi = std::max(hi, e);
            }
        }
        if (!(hi > lo)) hi = lo + 1e-9;
        const int bins = std::max(1, histogram_bins);
        const double width = (hi - lo) / bins;
        const auto hist_path = out_dir / "study_estimation_hist.csv";
        std::string hist = "policy,bin_lo,bin_hi,count\n";
        for (const auto& p : report.policies) {
            std::vector<int> counts(static_cast<std::size_t>(bins), 0);
            for (double e : p.estimates) {
                auto b = static_cast<int>((e - lo) / width);
                b = std::clamp(b, 0, bins - 1);
                ++counts[static_cast<std::size_t>(b)];
            }
            for (int b = 0; b < bins; ++b) {
                hist += to_string(p.policy);
                hist += ",";
                hist += format_double(lo + b * width);
                hist += ",";
                hist += format_double(lo + (b + 1) * width);
                hist += ",";
                hist += std::to_string(counts[static_cast<std::size_t>(b)]);
                hist += "\n";
            }
        }
        write_text(hist_path, hist);
        written.push_back(hist_path);
    }
    return written;
}

nlohmann::json thresholds_json(const ThresholdTable& table) {
    nlohmann::json j;
    j["entries"] = nlohmann::json::array();
    for (const auto& [key, value] : table.entries) {
        j["entries"].push_back({{"metric", to_string(key.first)},
                                {"quantity", to_string(key.second)},
                                {"threshold", value}});
    }
    j["calibration_run_ids"] = table.calibration_run_ids;
    return j;
}

void write_thresholds_json(const ThresholdTable& table, const std::filesystem::path& path) {
    write_text(path, thresholds_json(table).dump(2) + "\n");
}

nlohmann::json scenario_report_json(const ScenarioResult& result, const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["policy"] = to_string(cfg.policy);
    j["legacy"] = cfg.legacy;
    j["needs_model_revision"] = result.needs_model_revision;
    j["exit_code"] = result.exit_code;
    j["final_twin_params"] = {{"rope_length_m", result.final_twin_params.rope_length_m},
                              {"gravity_mps2", result.final_twin_params.gravity_mps2},
                              {"v_max_mps", result.final_twin_params.v_max_mps},
                              {"a_max_mps2", result.final_twin_params.a_max_mps2},
                              {"damping_per_s", result.final_twin_params.damping_per_s},
                              {"track_length_m", result.final_twin_params.track_length_m}};
    j["thresholds"] = thresholds_json(result.thresholds);
    j["runs"] = nlohmann::json::array();
    for (const auto& o : result.outcomes) {
        nlohmann::json r;
        r["run_index"] = o.run_index;
        r["run_id"] = o.run_id;
        r["fault_kind"] = to_string(o.fault.kind);
        r["fault_delta"] = o.fault.delta_fraction;
        r["aborted"] = o.aborted;
        if (o.aborted) r["abort_reason"] = o.abort_reason;
        r["verdict_rendered"] = o.verdict_rendered;
        if (o.verdict_rendered) {
            r["status"] = o.valid ? "valid" : "invalid";
            nlohmann::json breaches = nlohmann::json::array();
            for (const auto& b : o.breaches)
                breaches.push_back({{"metric", to_string(b.metric)},
                                    {"quantity", to_string(b.quantity)},
                                    {"value", b.value},
                                    {"threshold", b.threshold}});
            r["breaches"] = breaches;
        }
        r["estimation_attempted"] = o.estimation_attempted;
        r["params_updated"] = o.params_updated;
        if (o.params_updated) r["updated_v_max"] = o.updated_v_max;
        j["runs"].push_back(r);
    }
    j["events"] = nlohmann::json::array();
    for (const auto& ev : result.events)
        j["events"].push_back({{"seq", ev.seq}, {"topic", ev.topic}});
    return j;
}

std::vector<std::filesystem::path> write_scenario_report(const ScenarioResult& result,
                                                         const ScenarioConfig& cfg,
                                                         const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;

    const auto json_path = out_dir / "scenario_report.json";
    write_text(json_path, scenario_report_json(result, cfg).dump(2) + "\n");
    written.push_back(json_path);

    const auto thresholds_path = out_dir / "thresholds.json";
    write_thresholds_json(result.thresholds, thresholds_path);
    written.push_back(thresholds_path);

    const auto verdicts_path = out_dir / "verdicts.csv";
    std::string csv = "run_index,run_id,fault_kind,fault_delta,status,breach_count,params_updated\n";
    for (const auto& o : result.outcomes) {
        csv += std::to_string(o.run_index);
        csv += ",";
        csv += std::to_string(o.run_id);
        csv += ",";
        csv += to_string(o.fault.kind);
        csv += ",";
        csv += format_double(o.fault.delta_fraction);
        csv += ",";
        csv += o.aborted ? "aborted" : (o.verdict_rendered ? (o.valid ? "valid" : "invalid") : "pending");
        csv += ",";
        csv += std::to_string(o.breaches.size());
        csv += ",";
        csv += csv_bool(o.params_updated);
        csv += "\n";
    }
    write_text(verdicts_path, csv);
    written.push_back(verdicts_path);
    return written;
}

std::vector<std::filesystem::path> write_run_report(const Store& store, RunId run_id,
                                                    const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    const RunRecord rec = store.run(run_id);
    const std::vector<MetricResult> metrics = store.query_metrics(run_id);

    nlohmann::json j;
    j["run_id"] = run_id;
    j["machine_id"] = rec.machine_id;
    j["start_time_unix_s"] = rec.start_time_unix_s;
    j["fault_kind"] = to_string(rec.fault.kind);
    j["fault_delta"] = rec.fault.delta_fraction;
    j["status"] = to_string(rec.status);
    j["validated_metrics"] = nlohmann::json::array();
    j["informational_metrics"] = nlohmann::json::array();
    for (const auto& m : metrics) {
        nlohmann::json mj = {{"metric", to_string(m.metric)},
                             {"quantity", to_string(m.quantity)},
                             {"value", m.value},
                             {"included", m.included},
                             {"excluded", m.excluded}};
        const auto& vq = validated_quantities();
        if (std::find(vq.begin(), vq.end(), m.quantity) != vq.end())
            j["validated_metrics"].push_back(mj);
        else
            j["informational_metrics"].push_back(mj);
    }
    const auto json_path = out_dir / ("run_" + std::to_string(run_id) + ".json");
    write_text(json_path, j.dump(2) + "\n");
    written.push_back(json_path);

    const auto csv_path = out_dir / ("run_" + std::to_string(run_id) + "_metrics.csv");
    std::string csv = "metric,quantity,value,included,excluded\n";
    for (const auto& m : metrics) {
        csv += to_string(m.metric);
        csv += ",";
        csv += to_string(m.quantity);
        csv += ",";
        csv += format_double(m.value);
        csv += ",";
        csv += std::to_string(m.included);
        csv += ",";
        csv += std::to_string(m.excluded);
        csv += "\n";
    }
    write_text(csv_path, csv);
    written.push_back(csv_path);

    // trajectory CSV, 9 significant digits
    const Trace ref_x = store.query_trace(run_id, Quantity::position, TraceKind::reference);
    const Trace ref_v = store.query_trace(run_id, Quantity::velocity, TraceKind::reference);
    Trajectory traj;
    traj.t = ref_x.t;
    traj.x_ref = ref_x.v;
    traj.v_cmd = ref_v.v;
    traj.v_max_used_mps = 1.0; // unused by the writer
    const auto traj_path = out_dir / ("run_" + std::to_string(run_id) + "_trajectory.csv");
    write_trajectory_csv(traj, traj_path.string());
    written.push_back(traj_path);
    return written;
}

namespace {

bool type_matches(const nlohmann::json& value, const std::string& type) {
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "number") return value.is_number();
    if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
    if (type == "boolean") return value.is_boolean();
    if (type == "null") return value.is_null();
    return false;
}

void validate_node(const nlohmann::json& instance, const nlohmann::json& schema, const std::string& path,
                   std::vector<std::string>& errors) {
    if (schema.contains("type")) {
        const std::string type = schema.at("type").get<std::string>();
        if (!type_matches(instance, type)) {
            errors.push_back(path + ": expected " + type);
            return;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& candidate : schema.at("enum"))
            if (candidate == instance) found = true;
        if (!found) errors.push_back(path + ": value not in enum");
    }
    if (schema.contains("minimum") && instance.is_number()) {
        if (instance.get<double>() < schema.at("minimum").get<double>())
            errors.push_back(path + ": below minimum");
    }
    if (instance.is_object()) {
        if (schema.contains("required")) {
            for (const auto& req : schema.at("required"))
                if (!instance.contains(req.get<std::string>()))
                    errors.push_back(path + ": missing required field '" + req.get<std::string>() + "'");
        }
        if (schema.contains("properties")) {
            for (const auto& [key, subschema] : schema.at("properties").items())
                if (instance.contains(key)) validate_node(instance.at(key), subschema, path + "." + key, errors);
        }
    }
    if (instance.is_array() && schema.contains("items")) {
        const auto& items = schema.at("items");
        for (std::size_t i = 0; i < instance.size(); ++i)
            validate_node(instance[i], items, path + "[" + std::to_string(i) + "]", errors);
    }
}

} // namespace

std::vector<std::string> validate_against_schema(const nlohmann::json& instance,
                                                 const nlohmann::json& schema) {
    std::vector<std::string> errors;
    validate_node(instance, schema, "$", errors);
    return errors;
}

} // namespace twinwatch
