#pragma once

#include "twinwatch/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace twinwatch {

/// The schema every study report JSON satisfies; also shipped at
/// schemas/study_report.schema.json.
const std::string& study_report_schema();

nlohmann::json study_report_json(const StudyReport& report);

/// Writes study_<id>.json, study_<id>.csv, the schema file and, for the
/// estimation study, the histogram bins CSV. Returns the written paths.
std::vector<std::filesystem::path> write_study_report(const StudyReport& report,
                                                      const std::filesystem::path& out_dir,
                                                      int histogram_bins = 12);

nlohmann::json scenario_report_json(const ScenarioResult& result, const ScenarioConfig& cfg);
std::vector<std::filesystem::path> write_scenario_report(const ScenarioResult& result,
                                                         const ScenarioConfig& cfg,
                                                         const std::filesystem::path& out_dir);

nlohmann::json thresholds_json(const ThresholdTable& table);
void write_thresholds_json(const ThresholdTable& table, const std::filesystem::path& path);

/// Per-run report: metrics JSON + CSV and the trajectory CSV.
std::vector<std::filesystem::path> write_run_report(const Store& store, RunId run_id,
                                                    const std::filesystem::path& out_dir);

/// Minimal JSON-schema checker covering the keyword subset the shipped
/// schemas use: type, required, properties, items, enum, minimum.
/// Returns human-readable violations; empty means valid.
std::vector<std::string> validate_against_schema(const nlohmann::json& instance,
                                                 const nlohmann::json& schema);

} // namespace twinwatch
