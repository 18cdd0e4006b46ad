#include "twinwatch/replication.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/rng.hpp"
#include "twinwatch/trajectory.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace twinwatch {

IcUncertainty default_ic_uncertainty(const NoiseSpec& noise, const CraneParams& params) {
    IcUncertainty ic;
    ic.sigma_pos_m = noise.sigma_pos_m;
    ic.sigma_vel_mps = noise.sigma_vel_mps;
    ic.sigma_theta_rad = noise.sigma_theta_rad;
    ic.sigma_omega_radps = noise.sigma_theta_rad * params.natural_frequency_radps();
    return ic;
}

std::vector<PlantState> sample_initial_conditions(const PlantState& measured_initial,
                                                  const ReplicationPlan& plan) {
    if (plan.replications < 1) throw DomainError("sample_initial_conditions: R must be >= 1");

    std::vector<PlantState> out;
    out.reserve(plan.replications);
    out.push_back(measured_initial); // replication 0: unperturbed measurement

    const StreamKey base = StreamKey(plan.seed).with(static_cast<std::uint64_t>(plan.run_id)).with("ic");
    for (int r = 1; r < plan.replications; ++r) {
        auto eng = base.with(static_cast<std::uint64_t>(r)).engine();
        std::normal_distribution<double> unit(0.0, 1.0);
        PlantState s = measured_initial;
        s.x_m += plan.ic_uncertainty.sigma_pos_m * unit(eng);
        s.v_mps += plan.ic_uncertainty.sigma_vel_mps * unit(eng);
        s.theta_rad += plan.ic_uncertainty.sigma_theta_rad * unit(eng);
        s.omega_radps += plan.ic_uncertainty.sigma_omega_radps * unit(eng);
        out.push_back(s);
    }
    return out;
}

ReplicationSummary summarize(const std::vector<SimResult>& replications, Quantity q, RunId run_id) {
    if (replications.empty()) throw DomainError("summarize: no replications");
    const Eigen::Index n = replications[0].size();
    for (const auto& rep : replications) {
        if (rep.size() != n || (rep.t != replications[0].t).any())
            throw AlignmentError("summarize: replications do not share a time grid");
    }

    const auto r_count = static_cast<Eigen::Index>(replications.size());
    Eigen::MatrixXd m(r_count, n);
    for (Eigen::Index r = 0; r < r_count; ++r) m.row(r) = replications[r].values(q).transpose();

    ReplicationSummary s;
    s.run_id = run_id;
    s.quantity = q;
    s.t = replications[0].t;
    s.mean = m.colwise().mean().array().transpose();
    s.replications = static_cast<int>(r_count);
    if (r_count >= 2) {
        Eigen::ArrayXd var(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::ArrayXd dev = m.col(j).array() - s.mean[j];
            var[j] = dev.square().sum() / static_cast<double>(r_count - 1);
        }
        s.std = var.sqrt();
    }
    return s;
}

ReplicationResult run_replications(const Trajectory& trajectory, const PlantState& measured_initial,
                                   const CraneParams& twin_params, const ReplicationPlan& plan,
                                   double dt_s, double sample_period_s) {
    const std::vector<PlantState> initials = sample_initial_conditions(measured_initial, plan);
    const auto r_count = initials.size();

    ReplicationResult out;
    out.replications.resize(r_count);

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>({hw, r_count, 8});
    if (workers <= 1) {
        for (std::size_t r = 0; r < r_count; ++r)
            out.replications[r] = simulate(initials[r], trajectory, twin_params, dt_s, sample_period_s);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t r = next.fetch_add(1); r < r_count; r = next.fetch_add(1))
                    out.replications[r] = simulate(initials[r], trajectory, twin_params, dt_s, sample_period_s);
            });
        }
        for (auto& th : pool) th.join();
    }

    for (Quantity q : {Quantity::position, Quantity::velocity, Quantity::angular_position,
                       Quantity::angular_velocity})
        out.summaries.emplace(q, summarize(out.replications, q, plan.run_id));
    return out;
}

} // namespace twinwatch
