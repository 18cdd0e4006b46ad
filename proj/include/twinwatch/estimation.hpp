#pragma once

#include "twinwatch/crane.hpp"
#include "twinwatch/trace.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace twinwatch {

class Store;
struct RunRecord;

enum class InitialGuessPolicy {
    explicit_guess,          // use EstimationProblem::initial_guess as given
    reference_max,           // peak |v_cmd| of the run's reference trajectory
    fraction_of_reference,   // fraction * peak |v_cmd|
    measured_max_passthrough // max measured |v|; a lookup, not an estimation
};

const char* to_string(InitialGuessPolicy p);

struct EstimationProblem {
    RunId run_id = 0;
    std::vector<std::string> free_params = {"v_max_mps"};
    Eigen::VectorXd initial_guess;
    std::optional<Eigen::VectorXd> lower_bounds;
    std::optional<Eigen::VectorXd> upper_bounds;
    std::vector<Quantity> quantities = {Quantity::position, Quantity::velocity};
    InitialGuessPolicy policy = InitialGuessPolicy::fraction_of_reference;
    double policy_fraction = 0.90;
};

struct NelderMeadOptions {
    double f_tol = 1e-9;
    double x_tol = 1e-6;
    int max_iter = 200; // the 1-D default; use 2000 for higher dimensions
    std::optional<Eigen::VectorXd> lower_bounds;
    std::optional<Eigen::VectorXd> upper_bounds;
};

struct EstimationResult {
    Eigen::VectorXd estimate;
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
    InitialGuessPolicy policy = InitialGuessPolicy::explicit_guess;
    int failed_evaluations = 0; // cost evaluations that raised and scored +inf
};

/// Standard Nelder-Mead simplex iteration (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5). The initial simplex is x0 plus +5% per
/// dimension (+1e-4 absolute where x0 is 0). Terminates once the simplex
/// value spread drops below f_tol AND the vertex spread below x_tol, or at
/// max_iter. Bounds are handled by projection before each cost evaluation.
/// Never returns a point worse than the best evaluated one.
EstimationResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& cost,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& options);

/// Sum over the configured quantities of the squared differences between the
/// measured traces and one deterministic twin simulation with `candidate`
/// parameters, started from the run's first measured sample and resampled to
/// the measured grid.
double sse_cost(const CraneParams& candidate, const RunRecord& run, const Store& store,
                const std::vector<Quantity>& quantities, double dt_s, double sample_period_s);

/// Wraps sse_cost in nelder_mead under the problem's initial-guess policy.
/// On convergence the returned params carry the estimate; the caller decides
/// whether to publish the twin update.
EstimationResult estimate_parameters(const RunRecord& run, const EstimationProblem& problem,
                                     const Store& store, const CraneParams& twin_params, double dt_s,
                                     double sample_period_s);

/// Applies an estimate vector onto a parameter set.
CraneParams params_with(const CraneParams& base, const std::vector<std::string>& names,
                        const Eigen::VectorXd& values);

} // namespace twinwatch
