#pragma once

#include "rtadapt/objective.hpp"
#include "rtadapt/solver.hpp"
#include "rtadapt/uncertainty.hpp"

#include <optional>

namespace rtadapt {

enum class StrategyKind {
    None,            // non-adaptive benchmark
    ScenarioUpdate,  // refit the scenario distributions from measured shifts
    AlphaUpdate,     // tighten/relax the CVaR conservativeness level
    MarginUpdate,    // recompute the CTV-PTV margin and replan nominally
};

enum class EstimatorKind { Arithmetic, ExpSmoothing };

struct StrategyConfig {
    StrategyKind kind = StrategyKind::None;
    EstimatorKind estimator = EstimatorKind::ExpSmoothing;
    double beta = 0.1;
    double alpha_initial = 0.1;
    double alpha_step = 0.09;
    double alpha_min = 0.01;
    double alpha_max = 1.0;
    SmoothingPriors priors;
    int sigma_scenario_points = 1;        // 1 or 3
    double sigma_scenario_spread = 0.25;  // relative, three-point sets only
    double scenario_half_width = 3.0;

    bool operator==(const StrategyConfig&) const = default;
};

/// Dispatches to the configured estimator; estimates are clamped to the
/// physically meaningful range of the phantom grid.
ErrorEstimate run_estimator(const TrajectoryLog& log, const StrategyConfig& cfg,
                            const Phantom& phantom);

struct AdaptationDecision {
    bool triggered = false;
    std::optional<Plan> plan;
    ErrorEstimate estimate;
    double new_alpha = 0.0;              // AlphaUpdate
    DiscreteScenarioSet new_systematic;  // ScenarioUpdate
    SigmaScenarioSet new_sigma;          // ScenarioUpdate
    double new_margin_mm = 0.0;          // MarginUpdate
    Interval new_ptv;                    // MarginUpdate
};

/// Refits the systematic scenario set from the measured shifts and rebuilds
/// the sigma scenarios around the estimated random spread, then re-solves the
/// robust problem. Solver errors propagate to the caller.
AdaptationDecision adapt_scenario_update(const TrajectoryLog& log, const StrategyConfig& cfg,
                                         const RobustProblem& current,
                                         const SolverSettings& solver_settings,
                                         const VectorXd* warm_start, int fraction);

/// Steps the CVaR level: coverage violations lower alpha (more conservative),
/// sparing-only violations raise it, coverage taking priority when both fire.
/// The scenario sets stay unchanged; the problem is re-solved only when alpha
/// actually moves.
AdaptationDecision adapt_alpha_update(const CriteriaOutcome& outcome,
                                      const std::vector<QualityCriterion>& criteria,
                                      const StrategyConfig& cfg, const RobustProblem& current,
                                      const Plan& current_plan,
                                      const SolverSettings& solver_settings,
                                      const VectorXd* warm_start, int fraction);

/// Recomputes the CTV-PTV margin from the estimated error spreads, rebuilds
/// the PTV and its volume weights, and replans nominally against it.
AdaptationDecision adapt_margin_update(const TrajectoryLog& log, const StrategyConfig& cfg,
                                       const Phantom& phantom, const ObjectiveSpec& nominal_spec,
                                       const SolverSettings& solver_settings, int fraction);

}  // namespace rtadapt
