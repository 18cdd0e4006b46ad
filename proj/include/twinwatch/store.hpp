#pragma once

#include "twinwatch/crane.hpp"
#include "twinwatch/metrics.hpp"
#include "twinwatch/trace.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace twinwatch {

enum class RunStatus { planned, enacted, simulated, validated, recalibrated };

const char* to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

/// One routine operation (one lateral move). All sample timestamps associated
/// with a run are stored relative to its start time.
struct RunRecord {
    RunId run_id = 0; // 0 = assign on insert
    int machine_id = 1;
    std::int64_t start_time_unix_s = 0;
    FaultSpec fault;
    RunStatus status = RunStatus::planned;
};

enum class SeriesTable { trajectory, measurement, simulationdatapoint };

const char* to_string(SeriesTable t);

struct SeriesKey {
    RunId run_id = 0;
    int machine_id = 1;
    Quantity quantity = Quantity::position;
    std::optional<int> replication; // required for simulationdatapoint
};

struct IntegrityReport {
    bool ok = true;
    std::vector<std::string> violations;
};

/// File-backed persistence in the narrow schema: one directory per store, one
/// CSV file per table, an index JSON for key counters. Values round-trip
/// bit-exactly (shortest round-trip decimal serialization). Single writer,
/// many readers; writers serialize on an advisory lock file and publish each
/// append batch with a write-temp-then-rename.
class Store {
public:
    /// Opens an existing store or initializes a fresh one at `dir`.
    explicit Store(const std::filesystem::path& dir);

    const std::filesystem::path& dir() const { return dir_; }

    int ensure_machine(const std::string& name);

    /// Appends a run row; a duplicate run_id is rejected. run_id == 0 draws
    /// the next id from the index counters.
    RunId insert_run(const RunRecord& record);
    void update_run_status(RunId run_id, RunStatus status);
    RunRecord run(RunId run_id) const;
    std::vector<RunRecord> runs() const;

    /// Appends sample rows atomically per call and returns the row count.
    /// simulationdatapoint requires a replication index.
    std::size_t insert_series(SeriesTable table, const SeriesKey& key,
                              const Eigen::ArrayXd& t, const Eigen::ArrayXd& v);

    void insert_simulation(RunId run_id, int machine_id, int replications);
    int simulation_replications(RunId run_id) const;

    /// Samples ordered by t ascending; empty trace when no rows exist.
    /// Unknown runs raise NotFoundError.
    Trace query_trace(RunId run_id, Quantity q, TraceKind kind,
                      std::optional<int> replication = std::nullopt) const;
    std::vector<int> replication_indices(RunId run_id, Quantity q) const;

    /// Degenerate (absent) results are never stored; duplicates on
    /// (run, quantity, metric) are integrity errors.
    void insert_metric(const MetricResult& result);
    std::vector<MetricResult> query_metrics(RunId run_id) const;

    /// Re-reads every table file and checks referential integrity, key
    /// uniqueness and the run-relative time convention.
    IntegrityReport integrity_check() const;

    static const std::vector<std::string>& table_names();

private:
    struct Index;

    std::filesystem::path table_path(const std::string& table) const;
    void append_rows(const std::string& table, const std::vector<std::string>& rows);
    void rewrite_table(const std::string& table, const std::vector<std::string>& rows);
    std::vector<std::vector<std::string>> read_table(const std::string& table) const;
    void require_run(RunId run_id) const;

    std::filesystem::path dir_;
    // write-side caches; loaded on open, kept in sync with the files
    std::map<int, std::string> machines_;
    std::map<RunId, RunRecord> runs_;
    std::map<RunId, int> simulations_;
    // last timestamp + row count per series, for duplicate detection
    std::map<std::tuple<std::string, RunId, int, int, int>, double> series_last_t_;
    std::set<std::tuple<std::string, RunId, int>> metric_keys_; // (table, run, quantity)
    RunId next_run_id_ = 1;
};

/// Metric enum -> table name (mean_ned lives in the local table, total_ned in
/// the global one, matching the two-table layout of the schema).
std::string metric_table_name(Metric m);

} // namespace twinwatch
