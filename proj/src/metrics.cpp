#include "twinwatch/metrics.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/replication.hpp"

#include <cmath>

namespace twinwatch {

namespace {

void require_aligned(Eigen::Index a, Eigen::Index b, const char* who) {
    if (a != b) throw AlignmentError(std::string(who) + ": series lengths differ");
    if (a == 0) throw AlignmentError(std::string(who) + ": empty series");
}

} // namespace

const char* to_string(Metric m) {
    switch (m) {
    case Metric::rmse: return "rmse";
    case Metric::mean_ned: return "mean_ned";
    case Metric::total_ned: return "total_ned";
    case Metric::avg_rel_err: return "avg_rel_err";
    case Metric::max_rel_err: return "max_rel_err";
    }
    return "?";
}

Metric metric_from_string(const std::string& s) {
    for (Metric m : kAllMetrics)
        if (s == to_string(m)) return m;
    throw ConfigError("unknown metric: " + s);
}

MetricResult rmse(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& measured) {
    require_aligned(pred_mean.size(), measured.size(), "rmse");
    MetricResult r;
    r.metric = Metric::rmse;
    r.value = std::sqrt((pred_mean - measured).square().mean());
    r.included = pred_mean.size();
    r.excluded = 0;
    return r;
}

NedPointwise ned_pointwise(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& pred_std,
                           const Eigen::ArrayXd& measured, const MetricConfig& cfg) {
    require_aligned(pred_mean.size(), measured.size(), "ned_pointwise");
    require_aligned(pred_mean.size(), pred_std.size(), "ned_pointwise");

    NedPointwise out;
    out.included = pred_std >= cfg.eps_sigma;
    out.d = Eigen::ArrayXd::Zero(pred_mean.size());
    Eigen::Index n_inc = 0;
    for (Eigen::Index i = 0; i < pred_mean.size(); ++i) {
        if (out.included[i]) {
            out.d[i] = std::abs(pred_mean[i] - measured[i]) / pred_std[i];
            ++n_inc;
        }
    }
    if (n_inc == 0) throw DegenerateDataError("ned_pointwise: every sample excluded");
    return out;
}

MetricResult mean_ned(const NedPointwise& ned) {
    MetricResult r;
    r.metric = Metric::mean_ned;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < ned.d.size(); ++i) {
        if (ned.included[i]) {
            sum += ned.d[i];
            ++r.included;
        } else {
            ++r.excluded;
        }
    }
    if (r.included == 0) throw DegenerateDataError("mean_ned: every sample excluded");
    r.value = sum / static_cast<double>(r.included);
    return r;
}

MetricResult total_ned(const NedPointwise& ned) {
    MetricResult r;
    r.metric = Metric::total_ned;
    double sum_sq = 0.0;
    for (Eigen::Index i = 0; i < ned.d.size(); ++i) {
        if (ned.included[i]) {
            sum_sq += ned.d[i] * ned.d[i];
            ++r.included;
        } else {
            ++r.excluded;
        }
    }
    if (r.included == 0) throw DegenerateDataError("total_ned: every sample excluded");
    r.value = std::sqrt(sum_sq / static_cast<double>(r.included));
    return r;
}

MetricResult avg_rel_err(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& measured,
                         const Eigen::ArrayXd& times, const MetricConfig& cfg) {
    require_aligned(pred_mean.size(), measured.size(), "avg_rel_err");
    require_aligned(pred_mean.size(), times.size(), "avg_rel_err");
    if (!is_uniform_grid(times)) throw AlignmentError("avg_rel_err: non-uniform time grid");

    MetricResult r;
    r.metric = Metric::avg_rel_err;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < pred_mean.size(); ++i) {
        if (std::abs(pred_mean[i]) >= cfg.eps_mean) {
            sum += std::abs(measured[i] - pred_mean[i]) / std::abs(pred_mean[i]);
            ++r.included;
        } else {
            ++r.excluded;
        }
    }
    if (r.included == 0) throw DegenerateDataError("avg_rel_err: every sample excluded");
    r.value = sum / static_cast<double>(r.included);
    return r;
}

MetricResult max_rel_err(const Eigen::ArrayXd& pred_mean, const Eigen::ArrayXd& measured,
                         const MetricConfig& cfg) {
    require_aligned(pred_mean.size(), measured.size(), "max_rel_err");

    MetricResult r;
    r.metric = Metric::max_rel_err;
    double best = 0.0;
    for (Eigen::Index i = 0; i < pred_mean.size(); ++i) {
        if (std::abs(pred_mean[i]) >= cfg.eps_mean) {
            best = std::max(best, std::abs(measured[i] - pred_mean[i]) / std::abs(pred_mean[i]));
            ++r.included;
        } else {
            ++r.excluded;
        }
    }
    if (r.included == 0) throw DegenerateDataError("max_rel_err: every sample excluded");
    r.value = best;
    return r;
}

std::vector<MetricResult> compute_all(const ReplicationSummary& summary, const Trace& measured,
                                      const MetricConfig& cfg) {
    if (summary.t.size() != measured.t.size() || (summary.t != measured.t).any())
        throw AlignmentError("compute_all: measured trace not on the summary grid");

    std::vector<MetricResult> out;
    auto tag = [&](MetricResult r) {
        r.run_id = summary.run_id;
        r.quantity = summary.quantity;
        out.push_back(r);
    };

    tag(rmse(summary.mean, measured.v));

    if (summary.std.has_value()) {
        try {
            const NedPointwise ned = ned_pointwise(summary.mean, *summary.std, measured.v, cfg);
            tag(mean_ned(ned));
            tag(total_ned(ned));
        } catch (const DegenerateDataError&) {
            // reported as absent, not zero
        }
    }
    try {
        tag(avg_rel_err(summary.mean, measured.v, summary.t, cfg));
    } catch (const DegenerateDataError&) {
    }
    try {
        tag(max_rel_err(summary.mean, measured.v, cfg));
    } catch (const DegenerateDataError&) {
    }
    return out;
}

} // namespace twinwatch
