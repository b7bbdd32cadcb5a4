#pragma once

#include "rtadapt/objective.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace rtadapt {

struct SolverSettings {
    double gap_tol_rel = 1e-9;       // relative complementarity gap at exit
    double stationarity_tol = 1e-6;  // relative KKT stationarity required for success
    int max_newton_total = 500;      // iteration cap
    int max_backtracks = 60;
    bool warm_start = true;  // reuse the previous fluence when re-solving

    bool operator==(const SolverSettings&) const = default;
};

struct SolverDiagnostics {
    bool converged = false;
    int newton_steps = 0;
    double duality_gap_rel = 0.0;
    double kkt_stationarity = 0.0;       // ||grad f + J^T nu|| / (1 + ||grad f||), inf norm
    double max_constraint_violation = 0.0;  // max_j c_j(z); negative when strictly feasible
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& message, SolverDiagnostics diag)
        : std::runtime_error(message), diagnostics(diag) {}

    SolverDiagnostics diagnostics;
};

/// One inequality c(z) <= 0: an optional convex quadratic acting on the
/// leading x-block plus sparse linear terms over all variables.
struct IpmConstraint {
    const QuadraticForm* quad = nullptr;  // not owned; may be null
    std::vector<std::pair<int, double>> linear;
    double constant = 0.0;
};

/// minimize  objective_quad(x) + objective_linear^T z + objective_constant
/// subject to c_j(z) <= 0 and z_i >= 0 for i in `nonneg`.
///
/// The quadratic pieces must be positive semidefinite; the solver is a
/// log-barrier interior-point method and requires a strictly feasible start.
struct IpmProblem {
    int nx = 0;
    int nz = 0;
    const QuadraticForm* objective_quad = nullptr;  // not owned; may be null
    std::vector<std::pair<int, double>> objective_linear;
    double objective_constant = 0.0;
    std::vector<IpmConstraint> constraints;
    std::vector<int> nonneg;
    std::vector<std::pair<int, double>> upper;  // z_i <= cap
};

struct IpmResult {
    VectorXd z;
    double objective = 0.0;
    VectorXd constraint_multipliers;  // one per constraint, ordered as given
    VectorXd bound_multipliers;       // one per `nonneg` entry
    SolverDiagnostics diag;
};

/// Throws SolverError when the iteration budget is exhausted before the gap
/// and stationarity tolerances are met.
IpmResult solve_ipm(const IpmProblem& problem, const VectorXd& z0, const SolverSettings& settings);

}  // namespace rtadapt
