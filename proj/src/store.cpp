#include "twinwatch/store.hpp"

#include "twinwatch/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace twinwatch {

namespace {

// shortest round-trip decimal representation
std::string fmt(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string fmt(std::int64_t x) { return std::to_string(x); }

double parse_double(const std::string& s) {
    double out = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IntegrityError("store: malformed numeric field: '" + s + "'");
    return out;
}

std::int64_t parse_int(const std::string& s) {
    std::int64_t out = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IntegrityError("store: malformed integer field: '" + s + "'");
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

const std::map<std::string, std::string>& table_headers() {
    static const std::map<std::string, std::string> headers = {
        {"machine", "machine_id,name"},
        {"quantity", "quantity_id,name,unit,symbol"},
        {"run", "run_id,machine_id,start_time_unix_s,fault_kind,fault_delta,status"},
        {"trajectory", "run_id,machine_id,quantity_id,t_s,value"},
        {"measurement", "run_id,machine_id,quantity_id,t_s,value"},
        {"simulation", "run_id,machine_id,replications"},
        {"simulationdatapoint", "run_id,machine_id,quantity_id,replication,t_s,value"},
        {"metric_rmse", "run_id,machine_id,quantity_id,value,included,excluded"},
        {"metric_ned_local", "run_id,machine_id,quantity_id,value,included,excluded"},
        {"metric_ned_global", "run_id,machine_id,quantity_id,value,included,excluded"},
        {"metric_avg_rel_err", "run_id,machine_id,quantity_id,value,included,excluded"},
        {"metric_max_rel_err", "run_id,machine_id,quantity_id,value,included,excluded"},
        {"metric_reliability", "run_id,machine_id,quantity_id,value,included,excluded"},
    };
    return headers;
}

/// Advisory lock file; released on destruction.
class StoreLock {
public:
    explicit StoreLock(const std::filesystem::path& dir) : path_(dir / "store.lock") {
        for (int attempt = 0; attempt < 2000; ++attempt) {
            fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd_ >= 0) return;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        throw LifecycleError("store: could not acquire write lock at " + path_.string());
    }
    ~StoreLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

} // namespace

const char* to_string(RunStatus s) {
    switch (s) {
    case RunStatus::planned: return "planned";
    case RunStatus::enacted: return "enacted";
    case RunStatus::simulated: return "simulated";
    case RunStatus::validated: return "validated";
    case RunStatus::recalibrated: return "recalibrated";
    }
    return "?";
}

RunStatus run_status_from_string(const std::string& s) {
    for (RunStatus st : {RunStatus::planned, RunStatus::enacted, RunStatus::simulated,
                         RunStatus::validated, RunStatus::recalibrated})
        if (s == to_string(st)) return st;
    throw IntegrityError("store: unknown run status: " + s);
}

const char* to_string(SeriesTable t) {
    switch (t) {
    case SeriesTable::trajectory: return "trajectory";
    case SeriesTable::measurement: return "measurement";
    case SeriesTable::simulationdatapoint: return "simulationdatapoint";
    }
    return "?";
}

std::string metric_table_name(Metric m) {
    switch (m) {
    case Metric::rmse: return "metric_rmse";
    case Metric::mean_ned: return "metric_ned_local";
    case Metric::total_ned: return "metric_ned_global";
    case Metric::avg_rel_err: return "metric_avg_rel_err";
    case Metric::max_rel_err: return "metric_max_rel_err";
    }
    return "?";
}

const std::vector<std::string>& Store::table_names() {
    static const std::vector<std::string> names = {
        "machine",       "quantity",          "run",
        "trajectory",    "measurement",       "simulation",
        "simulationdatapoint", "metric_rmse", "metric_ned_local",
        "metric_ned_global",   "metric_avg_rel_err", "metric_max_rel_err",
        "metric_reliability",
    };
    return names;
}

std::filesystem::path Store::table_path(const std::string& table) const { return dir_ / (table + ".csv"); }

Store::Store(const std::filesystem::path& dir) : dir_(dir) {
    std::filesystem::create_directories(dir_);

    // bootstrap missing tables with their header rows
    for (const auto& name : table_names()) {
        if (!std::filesystem::exists(table_path(name))) rewrite_table(name, {});
    }
    if (!std::filesystem::exists(dir_ / "index.json")) {
        nlohmann::json idx;
        idx["next_run_id"] = 1;
        std::ofstream out(dir_ / "index.json");
        out << idx.dump(2) << "\n";
    }
    // the quantity catalogue is fixed
    if (read_table("quantity").empty()) {
        std::vector<std::string> rows = {
            "1,position,m,x",
            "2,velocity,m/s,v",
            "3,angular_position,rad,theta",
            "4,angular_velocity,rad/s,omega",
        };
        rewrite_table("quantity", rows);
    }

    // rebuild the write-side caches
    for (const auto& row : read_table("machine"))
        machines_[static_cast<int>(parse_int(row[0]))] = row[1];
    for (const auto& row : read_table("run")) {
        RunRecord r;
        r.run_id = parse_int(row[0]);
        r.machine_id = static_cast<int>(parse_int(row[1]));
        r.start_time_unix_s = parse_int(row[2]);
        r.fault.kind = fault_kind_from_string(row[3]);
        r.fault.delta_fraction = parse_double(row[4]);
        r.status = run_status_from_string(row[5]);
        runs_[r.run_id] = r;
    }
    for (const auto& row : read_table("simulation"))
        simulations_[parse_int(row[0])] = static_cast<int>(parse_int(row[2]));
    for (const auto& table : {"trajectory", "measurement"}) {
        for (const auto& row : read_table(table)) {
            auto key = std::make_tuple(std::string(table), parse_int(row[0]),
                                       static_cast<int>(parse_int(row[2])), -1, 0);
            series_last_t_[key] = parse_double(row[3]);
        }
    }
    for (const auto& row : read_table("simulationdatapoint")) {
        auto key = std::make_tuple(std::string("simulationdatapoint"), parse_int(row[0]),
                                   static_cast<int>(parse_int(row[2])),
                                   static_cast<int>(parse_int(row[3])), 0);
        series_last_t_[key] = parse_double(row[4]);
    }
    for (Metric m : kAllMetrics) {
        for (const auto& row : read_table(metric_table_name(m)))
            metric_keys_.insert({metric_table_name(m), parse_int(row[0]), static_cast<int>(parse_int(row[2]))});
    }

    std::ifstream idx_in(dir_ / "index.json");
    nlohmann::json idx;
    idx_in >> idx;
    next_run_id_ = idx.value("next_run_id", 1);
}

std::vector<std::vector<std::string>> Store::read_table(const std::string& table) const {
    std::ifstream in(table_path(table));
    if (!in) throw NotFoundError("store: missing table file " + table_path(table).string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            if (line != table_headers().at(table))
                throw IntegrityError("store: unexpected header in " + table + ".csv");
            continue;
        }
        if (line.empty()) continue;
        rows.push_back(split_csv(line));
    }
    return rows;
}

void Store::rewrite_table(const std::string& table, const std::vector<std::string>& rows) {
    const auto tmp = table_path(table).string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw LifecycleError("store: cannot write " + tmp);
        out << table_headers().at(table) << "\n";
        for (const auto& r : rows) out << r << "\n";
    }
    std::filesystem::rename(tmp, table_path(table));
}

void Store::append_rows(const std::string& table, const std::vector<std::string>& rows) {
    if (rows.empty()) return;
    StoreLock lock(dir_);
    std::ifstream in(table_path(table));
    std::stringstream existing;
    existing << in.rdbuf();
    const auto tmp = table_path(table).string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw LifecycleError("store: cannot write " + tmp);
        out << existing.str();
        for (const auto& r : rows) out << r << "\n";
    }
    std::filesystem::rename(tmp, table_path(table));
}

int Store::ensure_machine(const std::string& name) {
    for (const auto& [id, n] : machines_)
        if (n == name) return id;
    const int id = machines_.empty() ? 1 : machines_.rbegin()->first + 1;
    machines_[id] = name;
    append_rows("machine", {fmt(static_cast<std::int64_t>(id)) + "," + name});
    return id;
}

void Store::require_run(RunId run_id) const {
    if (!runs_.count(run_id)) throw NotFoundError("store: unknown run " + std::to_string(run_id));
}

RunId Store::insert_run(const RunRecord& record) {
    if (!machines_.count(record.machine_id))
        throw IntegrityError("store: unknown machine " + std::to_string(record.machine_id));
    RunRecord r = record;
    if (r.run_id == 0) r.run_id = next_run_id_;
    if (runs_.count(r.run_id))
        throw IntegrityError("store: duplicate run id " + std::to_string(r.run_id));

    append_rows("run", {fmt(r.run_id) + "," + fmt(static_cast<std::int64_t>(r.machine_id)) + "," +
                        fmt(r.start_time_unix_s) + "," + to_string(r.fault.kind) + "," +
                        fmt(r.fault.delta_fraction) + "," + to_string(r.status)});
    runs_[r.run_id] = r;
    next_run_id_ = std::max(next_run_id_, r.run_id + 1);

    StoreLock lock(dir_);
    nlohmann::json idx;
    idx["next_run_id"] = next_run_id_;
    const auto tmp = (dir_ / "index.json.tmp").string();
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << idx.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, dir_ / "index.json");
    return r.run_id;
}

void Store::update_run_status(RunId run_id, RunStatus status) {
    require_run(run_id);
    runs_[run_id].status = status;
    std::vector<std::string> rows;
    for (const auto& [id, r] : runs_) {
        rows.push_back(fmt(id) + "," + fmt(static_cast<std::int64_t>(r.machine_id)) + "," +
                       fmt(r.start_time_unix_s) + "," + to_string(r.fault.kind) + "," +
                       fmt(r.fault.delta_fraction) + "," + to_string(r.status));
    }
    StoreLock lock(dir_);
    rewrite_table("run", rows);
}

RunRecord Store::run(RunId run_id) const {
    require_run(run_id);
    return runs_.at(run_id);
}

std::vector<RunRecord> Store::runs() const {
    std::vector<RunRecord> out;
    out.reserve(runs_.size());
    for (const auto& [id, r] : runs_) out.push_back(r);
    return out;
}

std::size_t Store::insert_series(SeriesTable table, const SeriesKey& key, const Eigen::ArrayXd& t,
                                 const Eigen::ArrayXd& v) {
    if (t.size() != v.size()) throw AlignmentError("store: series time/value lengths differ");
    require_run(key.run_id);
    if (!machines_.count(key.machine_id))
        throw IntegrityError("store: unknown machine " + std::to_string(key.machine_id));
    if (table == SeriesTable::simulationdatapoint && !key.replication.has_value())
        throw PreconditionError("store: simulationdatapoint rows need a replication index");

    const std::string name = to_string(table);
    const int repl = key.replication.value_or(-1);
    const auto cache_key = std::make_tuple(name, key.run_id, quantity_id(key.quantity), repl, 0);

    double last_t = -std::numeric_limits<double>::infinity();
    if (auto it = series_last_t_.find(cache_key); it != series_last_t_.end()) last_t = it->second;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        if (!(t[i] > last_t))
            throw IntegrityError("store: duplicate or non-increasing timestamp in " + name);
        last_t = t[i];
    }

    std::vector<std::string> rows;
    rows.reserve(t.size());
    const std::string prefix = fmt(key.run_id) + "," + fmt(static_cast<std::int64_t>(key.machine_id)) +
                               "," + fmt(static_cast<std::int64_t>(quantity_id(key.quantity))) + ",";
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        if (table == SeriesTable::simulationdatapoint)
            rows.push_back(prefix + fmt(static_cast<std::int64_t>(repl)) + "," + fmt(t[i]) + "," + fmt(v[i]));
        else
            rows.push_back(prefix + fmt(t[i]) + "," + fmt(v[i]));
    }
    append_rows(name, rows);
    if (t.size() > 0) series_last_t_[cache_key] = t[t.size() - 1];
    return static_cast<std::size_t>(t.size());
}

void Store::insert_simulation(RunId run_id, int machine_id, int replications) {
    require_run(run_id);
    if (simulations_.count(run_id))
        throw IntegrityError("store: duplicate simulation entry for run " + std::to_string(run_id));
    append_rows("simulation", {fmt(run_id) + "," + fmt(static_cast<std::int64_t>(machine_id)) + "," +
                               fmt(static_cast<std::int64_t>(replications))});
    simulations_[run_id] = replications;
}

int Store::simulation_replications(RunId run_id) const {
    auto it = simulations_.find(run_id);
    if (it == simulations_.end())
        throw NotFoundError("store: no simulation entry for run " + std::to_string(run_id));
    return it->second;
}

Trace Store::query_trace(RunId run_id, Quantity q, TraceKind kind, std::optional<int> replication) const {
    require_run(run_id);

    std::string table;
    switch (kind) {
    case TraceKind::reference: table = "trajectory"; break;
    case TraceKind::measured: table = "measurement"; break;
    case TraceKind::simulated: table = "simulationdatapoint"; break;
    default:
        throw ConfigError("store: summary traces are derived, not stored; query replications instead");
    }

    std::vector<std::pair<double, double>> samples;
    for (const auto& row : read_table(table)) {
        if (parse_int(row[0]) != run_id) continue;
        if (static_cast<int>(parse_int(row[2])) != quantity_id(q)) continue;
        if (table == "simulationdatapoint") {
            const int repl = static_cast<int>(parse_int(row[3]));
            if (replication.has_value() && repl != *replication) continue;
            if (!replication.has_value())
                throw ConfigError("store: simulated trace queries need a replication index");
            samples.emplace_back(parse_double(row[4]), parse_double(row[5]));
        } else {
            samples.emplace_back(parse_double(row[3]), parse_double(row[4]));
        }
    }
    std::sort(samples.begin(), samples.end());

    Trace tr;
    tr.run_id = run_id;
    tr.quantity = q;
    tr.kind = kind;
    tr.t.resize(static_cast<Eigen::Index>(samples.size()));
    tr.v.resize(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        tr.t[static_cast<Eigen::Index>(i)] = samples[i].first;
        tr.v[static_cast<Eigen::Index>(i)] = samples[i].second;
    }
    return tr;
}

std::vector<int> Store::replication_indices(RunId run_id, Quantity q) const {
    require_run(run_id);
    std::set<int> found;
    for (const auto& row : read_table("simulationdatapoint")) {
        if (parse_int(row[0]) != run_id) continue;
        if (static_cast<int>(parse_int(row[2])) != quantity_id(q)) continue;
        found.insert(static_cast<int>(parse_int(row[3])));
    }
    return {found.begin(), found.end()};
}

void Store::insert_metric(const MetricResult& result) {
    require_run(result.run_id);
    const std::string table = metric_table_name(result.metric);
    const auto key = std::make_tuple(table, result.run_id, quantity_id(result.quantity));
    if (metric_keys_.count(key))
        throw IntegrityError("store: duplicate metric row (" + table + ", run " +
                             std::to_string(result.run_id) + ", " + to_string(result.quantity) + ")");
    const int machine_id = runs_.at(result.run_id).machine_id;
    append_rows(table, {fmt(result.run_id) + "," + fmt(static_cast<std::int64_t>(machine_id)) + "," +
                        fmt(static_cast<std::int64_t>(quantity_id(result.quantity))) + "," +
                        fmt(result.value) + "," + fmt(static_cast<std::int64_t>(result.included)) + "," +
                        fmt(static_cast<std::int64_t>(result.excluded))});
    metric_keys_.insert(key);
}

std::vector<MetricResult> Store::query_metrics(RunId run_id) const {
    require_run(run_id);
    std::vector<MetricResult> out;
    for (Metric m : kAllMetrics) {
        for (const auto& row : read_table(metric_table_name(m))) {
            if (parse_int(row[0]) != run_id) continue;
            MetricResult r;
            r.run_id = run_id;
            r.quantity = quantity_from_id(static_cast<int>(parse_int(row[2])));
            r.metric = m;
            r.value = parse_double(row[3]);
            r.included = parse_int(row[4]);
            r.excluded = parse_int(row[5]);
            out.push_back(r);
        }
    }
    return out;
}

IntegrityReport Store::integrity_check() const {
    IntegrityReport report;
    auto fail = [&](const std::string& msg) {
        report.ok = false;
        report.violations.push_back(msg);
    };

    std::set<int> machine_ids, quantity_ids;
    std::set<RunId> run_ids;
    for (const auto& row : read_table("machine")) {
        const int id = static_cast<int>(parse_int(row[0]));
        if (!machine_ids.insert(id).second) fail("duplicate machine id " + row[0]);
    }
    for (const auto& row : read_table("quantity")) {
        const int id = static_cast<int>(parse_int(row[0]));
        if (!quantity_ids.insert(id).second) fail("duplicate quantity id " + row[0]);
    }
    for (const auto& row : read_table("run")) {
        const RunId id = parse_int(row[0]);
        if (!run_ids.insert(id).second) fail("duplicate run id " + row[0]);
        if (!machine_ids.count(static_cast<int>(parse_int(row[1]))))
            fail("run " + row[0] + " references unknown machine " + row[1]);
    }

    auto check_series = [&](const std::string& table, bool with_repl) {
        std::map<std::tuple<RunId, int, int, int>, double> last_t;
        std::map<RunId, double> first_t;
        for (const auto& row : read_table(table)) {
            const RunId run_id = parse_int(row[0]);
            const int machine = static_cast<int>(parse_int(row[1]));
            const int quantity = static_cast<int>(parse_int(row[2]));
            const int repl = with_repl ? static_cast<int>(parse_int(row[3])) : -1;
            const double t = parse_double(row[with_repl ? 4 : 3]);
            if (!run_ids.count(run_id)) fail(table + " references unknown run " + row[0]);
            if (!machine_ids.count(machine)) fail(table + " references unknown machine " + row[1]);
            if (!quantity_ids.count(quantity)) fail(table + " references unknown quantity " + row[2]);
            const auto key = std::make_tuple(run_id, machine, quantity, repl);
            if (auto it = last_t.find(key); it != last_t.end() && !(t > it->second))
                fail(table + ": duplicate or unordered timestamp for run " + row[0]);
            last_t[key] = t;
            auto [fit, inserted] = first_t.emplace(run_id, t);
            if (!inserted) fit->second = std::min(fit->second, t);
        }
        if (table == "trajectory") {
            for (const auto& [run_id, t0] : first_t)
                if (t0 != 0.0) fail("trajectory: run " + std::to_string(run_id) + " does not start at t=0");
        }
    };
    check_series("trajectory", false);
    check_series("measurement", false);
    check_series("simulationdatapoint", true);

    for (const auto& row : read_table("simulation")) {
        if (!run_ids.count(parse_int(row[0]))) fail("simulation references unknown run " + row[0]);
    }
    for (Metric m : kAllMetrics) {
        const std::string table = metric_table_name(m);
        std::set<std::pair<RunId, int>> seen;
        for (const auto& row : read_table(table)) {
            const RunId run_id = parse_int(row[0]);
            const int quantity = static_cast<int>(parse_int(row[2]));
            if (!run_ids.count(run_id)) fail(table + " references unknown run " + row[0]);
            if (!quantity_ids.count(quantity)) fail(table + " references unknown quantity " + row[2]);
            if (!seen.insert({run_id, quantity}).second)
                fail(table + ": duplicate (run, quantity) = (" + row[0] + ", " + row[2] + ")");
        }
    }
    return report;
}

} // namespace twinwatch
