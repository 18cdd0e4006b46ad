#include "twinwatch/estimation.hpp"

#include "twinwatch/errors.hpp"
#include "twinwatch/store.hpp"
#include "twinwatch/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace twinwatch {

const char* to_string(InitialGuessPolicy p) {
    switch (p) {
    case InitialGuessPolicy::explicit_guess: return "explicit";
    case InitialGuessPolicy::reference_max: return "reference_max";
    case InitialGuessPolicy::fraction_of_reference: return "fraction_of_reference";
    case InitialGuessPolicy::measured_max_passthrough: return "measured_max_passthrough";
    }
    return "?";
}

namespace {

Eigen::VectorXd project(Eigen::VectorXd x, const NelderMeadOptions& opt) {
    if (opt.lower_bounds) x = x.cwiseMax(*opt.lower_bounds);
    if (opt.upper_bounds) x = x.cwiseMin(*opt.upper_bounds);
    return x;
}

} // namespace

EstimationResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& cost,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& options) {
    const Eigen::Index dim = x0.size();
    if (dim < 1) throw DomainError("nelder_mead: dimension must be >= 1");

    EstimationResult result;
    Eigen::VectorXd best_x = project(x0, options);
    double best_f = std::numeric_limits<double>::infinity();

    auto eval = [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd xp = project(x, options);
        double f;
        try {
            f = cost(xp);
        } catch (const std::exception& e) {
            std::cerr << "nelder_mead: cost evaluation failed (" << e.what() << "), scoring +inf\n";
            ++result.failed_evaluations;
            f = std::numeric_limits<double>::infinity();
        }
        if (f < best_f) {
            best_f = f;
            best_x = xp;
        }
        return f;
    };

    // simplex: x0 plus +5% per dimension (or +1e-4 absolute on zero components)
    std::vector<Eigen::VectorXd> xs;
    xs.push_back(project(x0, options));
    for (Eigen::Index j = 0; j < dim; ++j) {
        Eigen::VectorXd v = x0;
        v[j] += (x0[j] != 0.0) ? 0.05 * x0[j] : 1e-4;
        xs.push_back(project(v, options));
    }
    std::vector<double> fs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) fs[i] = eval(xs[i]);
    if (!std::isfinite(fs[0]))
        throw DomainError("nelder_mead: cost at the initial guess is not finite");

    std::vector<std::size_t> order(xs.size());

    constexpr double rho = 1.0, chi = 2.0, gamma = 0.5, sigma = 0.5;
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });

        const std::size_t lo = order.front(), hi = order.back();
        const double f_spread = fs[hi] - fs[lo];
        double x_spread = 0.0;
        for (std::size_t i : order)
            x_spread = std::max(x_spread, (xs[i] - xs[lo]).cwiseAbs().maxCoeff());
        if (f_spread < options.f_tol && x_spread < options.x_tol) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (std::size_t i : order)
            if (i != hi) centroid += xs[i];
        centroid /= static_cast<double>(xs.size() - 1);

        const Eigen::VectorXd xr = centroid + rho * (centroid - xs[hi]);
        const double fr = eval(xr);
        const std::size_t second_worst = order[order.size() - 2];

        if (fr < fs[lo]) {
            const Eigen::VectorXd xe = centroid + chi * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                xs[hi] = xe;
                fs[hi] = fe;
            } else {
                xs[hi] = xr;
                fs[hi] = fr;
            }
        } else if (fr < fs[second_worst]) {
            xs[hi] = xr;
            fs[hi] = fr;
        } else if (fr < fs[hi]) {
            const Eigen::VectorXd xc = centroid + gamma * (xr - centroid); // outside contraction
            const double fc = eval(xc);
            if (fc <= fr) {
                xs[hi] = xc;
                fs[hi] = fc;
            } else {
                for (std::size_t i : order) {
                    if (i == lo) continue;
                    xs[i] = xs[lo] + sigma * (xs[i] - xs[lo]);
                    fs[i] = eval(xs[i]);
                }
            }
        } else {
            const Eigen::VectorXd xc = centroid - gamma * (centroid - xs[hi]); // inside contraction
            const double fc = eval(xc);
            if (fc < fs[hi]) {
                xs[hi] = xc;
                fs[hi] = fc;
            } else {
                for (std::size_t i : order) {
                    if (i == lo) continue;
                    xs[i] = xs[lo] + sigma * (xs[i] - xs[lo]);
                    fs[i] = eval(xs[i]);
                }
            }
        }
    }

    result.estimate = best_x;
    result.cost = best_f;
    result.iterations = iter;
    return result;
}

CraneParams params_with(const CraneParams& base, const std::vector<std::string>& names,
                        const Eigen::VectorXd& values) {
    if (static_cast<Eigen::Index>(names.size()) != values.size())
        throw DomainError("params_with: name/value count mismatch");
    CraneParams out = base;
    for (std::size_t i = 0; i < names.size(); ++i) set_param(out, names[i], values[static_cast<Eigen::Index>(i)]);
    return out;
}

double sse_cost(const CraneParams& candidate, const RunRecord& run, const Store& store,
                const std::vector<Quantity>& quantities, double dt_s, double sample_period_s) {
    if (quantities.empty()) throw PreconditionError("sse_cost: no quantities configured");
    validate(candidate);

    // initial conditions: the run's first measured sample
    const Trace mx = store.query_trace(run.run_id, Quantity::position, TraceKind::measured);
    const Trace mv = store.query_trace(run.run_id, Quantity::velocity, TraceKind::measured);
    const Trace mth = store.query_trace(run.run_id, Quantity::angular_position, TraceKind::measured);
    const Trace mom = store.query_trace(run.run_id, Quantity::angular_velocity, TraceKind::measured);
    if (mx.size() == 0) throw NotFoundError("sse_cost: run has no measured traces");

    PlantState initial;
    initial.x_m = mx.v[0];
    initial.v_mps = std::clamp(mv.v[0], -candidate.v_max_mps, candidate.v_max_mps);
    initial.theta_rad = mth.v[0];
    initial.omega_radps = mom.v[0];

    // reference trajectory, rebuilt from the store and padded to the measured horizon
    const Trace ref_x = store.query_trace(run.run_id, Quantity::position, TraceKind::reference);
    const Trace ref_v = store.query_trace(run.run_id, Quantity::velocity, TraceKind::reference);
    if (ref_x.size() == 0) throw NotFoundError("sse_cost: run has no stored trajectory");
    Trajectory traj;
    traj.run_id = run.run_id;
    traj.t = ref_x.t;
    traj.x_ref = ref_x.v;
    traj.v_cmd = ref_v.v;
    traj.v_max_used_mps = std::max(traj.peak_v_cmd(), candidate.v_max_mps);
    const double horizon = mx.t[mx.size() - 1];
    if (horizon > traj.duration_s())
        traj = with_settle_tail(traj, horizon - traj.duration_s(), sample_period_s);

    const SimResult sim = simulate(initial, traj, candidate, dt_s, sample_period_s);

    double total = 0.0;
    for (Quantity q : quantities) {
        const Trace measured = store.query_trace(run.run_id, q, TraceKind::measured);
        const Trace sim_on_grid = resample(sim.trace(run.run_id, q, TraceKind::simulated), measured.t);
        total += (sim_on_grid.v - measured.v).square().sum();
    }
    return total;
}

EstimationResult estimate_parameters(const RunRecord& run, const EstimationProblem& problem,
                                     const Store& store, const CraneParams& twin_params, double dt_s,
                                     double sample_period_s) {
    if (problem.free_params.empty()) throw PreconditionError("estimate_parameters: no free parameters");
    if (problem.quantities.empty()) throw PreconditionError("estimate_parameters: no quantities");

    const auto dim = static_cast<Eigen::Index>(problem.free_params.size());
    Eigen::VectorXd x0(dim);
    if (problem.initial_guess.size() == dim)
        x0 = problem.initial_guess;
    else
        for (Eigen::Index i = 0; i < dim; ++i)
            x0[i] = get_param(twin_params, problem.free_params[static_cast<std::size_t>(i)]);

    const auto vmax_slot = std::find(problem.free_params.begin(), problem.free_params.end(), "v_max_mps");

    if (problem.policy == InitialGuessPolicy::reference_max ||
        problem.policy == InitialGuessPolicy::fraction_of_reference ||
        problem.policy == InitialGuessPolicy::measured_max_passthrough) {
        if (vmax_slot == problem.free_params.end())
            throw ConfigError("estimate_parameters: velocity-based policy needs v_max_mps free");
        const Eigen::Index slot = vmax_slot - problem.free_params.begin();

        if (problem.policy == InitialGuessPolicy::measured_max_passthrough) {
            // the database shortcut: look the value up instead of estimating
            const Trace mv = store.query_trace(run.run_id, Quantity::velocity, TraceKind::measured);
            if (mv.size() == 0) throw NotFoundError("estimate_parameters: run has no measured velocity");
            EstimationResult r;
            r.estimate = x0;
            r.estimate[slot] = mv.v.abs().maxCoeff();
            r.policy = problem.policy;
            r.converged = true;
            r.iterations = 0;
            r.cost = sse_cost(params_with(twin_params, problem.free_params, r.estimate), run, store,
                              problem.quantities, dt_s, sample_period_s);
            return r;
        }

        const Trace ref_v = store.query_trace(run.run_id, Quantity::velocity, TraceKind::reference);
        if (ref_v.size() == 0) throw NotFoundError("estimate_parameters: run has no stored trajectory");
        const double ref_max = ref_v.v.abs().maxCoeff();
        x0[slot] = problem.policy == InitialGuessPolicy::reference_max ? ref_max
                                                                       : problem.policy_fraction * ref_max;
    }

    NelderMeadOptions opt;
    opt.max_iter = dim == 1 ? 200 : 2000;
    opt.lower_bounds = problem.lower_bounds;
    opt.upper_bounds = problem.upper_bounds;
    if (!opt.lower_bounds) {
        // physical parameters stay positive
        opt.lower_bounds = Eigen::VectorXd::Constant(dim, 1e-9);
    }

    auto cost = [&](const Eigen::VectorXd& x) {
        return sse_cost(params_with(twin_params, problem.free_params, x), run, store, problem.quantities,
                        dt_s, sample_period_s);
    };

    EstimationResult r = nelder_mead(cost, x0, opt);
    r.policy = problem.policy;
    return r;
}

} // namespace twinwatch
