#include "twinwatch/validator.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/store.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

namespace twinwatch {

double ThresholdTable::at(Metric m, Quantity q) const {
    auto it = entries.find({m, q});
    if (it == entries.end())
        throw ConfigError(std::string("missing threshold for (") + to_string(m) + ", " + to_string(q) + ")");
    return it->second;
}

const char* to_string(VerdictPolicy p) {
    return p == VerdictPolicy::any_breach ? "any_breach" : "majority_vote";
}

VerdictPolicy policy_from_string(const std::string& s) {
    if (s == "any" || s == "any_breach") return VerdictPolicy::any_breach;
    if (s == "majority" || s == "majority_vote") return VerdictPolicy::majority_vote;
    throw ConfigError("unknown verdict policy: " + s);
}

ThresholdTable calibrate_thresholds(const std::vector<MetricResult>& normal_results,
                                    const std::vector<std::pair<Metric, Quantity>>& required) {
    ThresholdTable table;
    std::set<RunId> run_ids;
    for (const auto& r : normal_results) {
        const auto key = std::make_pair(r.metric, r.quantity);
        auto it = table.entries.find(key);
        if (it == table.entries.end())
            table.entries[key] = r.value;
        else
            it->second = std::max(it->second, r.value);
        run_ids.insert(r.run_id);
    }
    for (const auto& pair : required) {
        if (!table.contains(pair.first, pair.second))
            throw ConfigError(std::string("no normal observations for (") + to_string(pair.first) + ", " +
                              to_string(pair.second) + ")");
    }
    table.calibration_run_ids.assign(run_ids.begin(), run_ids.end());
    return table;
}

Verdict evaluate(RunId run_id, const std::vector<MetricResult>& results, const ThresholdTable& table,
                 VerdictPolicy policy) {
    Verdict v;
    v.run_id = run_id;
    v.policy = policy;
    v.evaluated_pairs = static_cast<Eigen::Index>(results.size());
    for (const auto& r : results) {
        const double threshold = table.at(r.metric, r.quantity);
        if (r.value > threshold) // strict: the calibration extreme stays valid
            v.breaches.push_back({r.metric, r.quantity, r.value, threshold});
    }
    switch (policy) {
    case VerdictPolicy::any_breach:
        v.valid = v.breaches.empty();
        break;
    case VerdictPolicy::majority_vote:
        v.valid = 2 * static_cast<Eigen::Index>(v.breaches.size()) <= v.evaluated_pairs;
        break;
    }
    return v;
}

namespace {

std::map<std::string, DelimitPredicate>& predicate_registry() {
    static std::map<std::string, DelimitPredicate> registry = {
        {"velocity_upward_zero_crossing", [](double prev, double curr) { return prev < 0.0 && curr >= 0.0; }},
    };
    return registry;
}

std::mutex registry_mutex;

} // namespace

void register_delimit_predicate(const std::string& id, DelimitPredicate pred) {
    std::lock_guard<std::mutex> lock(registry_mutex);
    predicate_registry()[id] = std::move(pred);
}

std::vector<ExperimentSegment> delimit(const std::vector<RunRecord>& runs, const ExperimentWindow& window) {
    if (window.mode != WindowMode::per_run)
        throw ConfigError("delimit: run streams support per_run windows only");
    std::vector<ExperimentSegment> out;
    out.reserve(runs.size());
    for (const auto& r : runs) {
        ExperimentSegment seg;
        seg.run_id = r.run_id;
        seg.t_start = static_cast<double>(r.start_time_unix_s);
        seg.t_end = seg.t_start;
        out.push_back(seg);
    }
    return out;
}

std::vector<ExperimentSegment> delimit(const Trace& stream, const ExperimentWindow& window) {
    std::vector<ExperimentSegment> out;
    if (stream.size() == 0) return out;

    if (window.mode == WindowMode::time_based) {
        if (!(window.duration_s > 0.0)) throw ConfigError("delimit: time window duration must be > 0");
        const double t0 = stream.t[0];
        const double t_last = stream.t[stream.size() - 1];
        for (double start = t0; start <= t_last; start += window.duration_s)
            out.push_back({start, start + window.duration_s, 0});
        return out;
    }

    if (window.mode == WindowMode::event_based) {
        DelimitPredicate pred;
        {
            std::lock_guard<std::mutex> lock(registry_mutex);
            auto it = predicate_registry().find(window.predicate_id);
            if (it == predicate_registry().end())
                throw ConfigError("delimit: unknown predicate id: " + window.predicate_id);
            pred = it->second;
        }
        std::vector<double> boundaries;
        for (Eigen::Index i = 1; i < stream.size(); ++i)
            if (pred(stream.v[i - 1], stream.v[i])) boundaries.push_back(stream.t[i]);
        for (std::size_t b = 0; b + 1 < boundaries.size(); ++b)
            out.push_back({boundaries[b], boundaries[b + 1], 0});
        return out;
    }

    throw ConfigError("delimit: sample streams need a time or event window");
}

} // namespace twinwatch
