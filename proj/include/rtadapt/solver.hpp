#pragma once

#include "rtadapt/ipm.hpp"
#include "rtadapt/objective.hpp"
#include "rtadapt/phantom.hpp"
#include "rtadapt/uncertainty.hpp"

#include <optional>
#include <vector>

namespace rtadapt {

/// Conditional value at risk of a discrete distribution: the expectation over
/// the worst alpha-tail. Greedy evaluation of
///   max { pi . values : 0 <= pi <= probs/alpha, sum(pi) = 1 }.
/// alpha = 1 is the plain expectation; alpha <= min(probs) the maximum.
double cvar_discrete(const Eigen::Ref<const VectorXd>& values,
                     const Eigen::Ref<const VectorXd>& probs, double alpha);

/// Robust fluence problem: nested CVaR over systematic-shift scenarios and
/// random-error sigma scenarios of the expected fraction-averaged objective.
struct RobustProblem {
    const Phantom* phantom = nullptr;
    ObjectiveSpec spec;  // targets the CTV
    DiscreteScenarioSet systematic;
    SigmaScenarioSet sigma_set;
    int fractions = 30;
    double alpha = 0.1;
    double scenario_half_width = 3.0;  // discretization window of the sigma scenarios
};

struct Plan {
    enum class Provenance { Nominal, Robust };

    VectorXd fluence;
    Provenance provenance = Provenance::Nominal;
    double objective = 0.0;
    int created_at_fraction = 0;
    double alpha = 1.0;                   // robust plans
    DiscreteScenarioSet systematic;       // robust plans: scenario set in effect
    SigmaScenarioSet sigma_set;           // robust plans
    double margin_mm = 0.0;               // nominal plans: PTV margin in effect
};

/// Full solution of the dualized robust problem, including the auxiliary
/// epigraph variables so the constraint system can be checked directly.
struct Solution {
    VectorXd fluence;
    double objective = 0.0;
    double lambda = 0.0;
    VectorXd mu;         // one per systematic scenario
    VectorXd lambda_bar; // one per systematic scenario
    MatrixXd mu_bar;     // (systematic, sigma) layout
    SolverDiagnostics diag;
};

/// Minimizes the weighted quadratic objective of the unshifted dose over
/// nonnegative fluence. The returned plan satisfies projected-gradient
/// first-order optimality within 1e-6 relative.
Plan solve_nominal(const Phantom& phantom, const ObjectiveSpec& spec,
                   const SolverSettings& settings = {});

/// Solves the dual form of the nested-CVaR robust problem as one convex
/// quadratically constrained program. The returned objective agrees with the
/// independently evaluated discrete nested CVaR at the returned fluence
/// within 1e-5 relative.
Solution solve_robust_full(const RobustProblem& problem, const SolverSettings& settings = {},
                           const VectorXd* warm_start = nullptr);

Plan solve_robust(const RobustProblem& problem, const SolverSettings& settings = {},
                  const VectorXd* warm_start = nullptr);

/// Nested CVaR objective at a fixed fluence, evaluated through per-scenario
/// expected objectives (scenario-dose path) and the greedy discrete CVaR.
double nested_cvar_objective(const RobustProblem& problem, const Eigen::Ref<const VectorXd>& x);

/// Expected per-scenario objectives at a fixed fluence, laid out as
/// (systematic, sigma); the building block of nested_cvar_objective.
MatrixXd scenario_objectives(const RobustProblem& problem, const Eigen::Ref<const VectorXd>& x);

/// Minimizes the probability-weighted expectation over all scenarios; the
/// alpha = 1 limit of the robust problem.
Plan solve_expectation(const RobustProblem& problem, const SolverSettings& settings = {});

/// Minimizes the worst scenario objective (epigraph form); the small-alpha
/// limit of the robust problem.
Plan solve_worst_case(const RobustProblem& problem, const SolverSettings& settings = {});

}  // namespace rtadapt
