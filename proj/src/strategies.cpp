#include "rtadapt/strategies.hpp"

#include <algorithm>
#include <cmath>

namespace rtadapt {

ErrorEstimate run_estimator(const TrajectoryLog& log, const StrategyConfig& cfg,
                            const Phantom& phantom) {
    ErrorEstimate est = cfg.estimator == EstimatorKind::Arithmetic
                            ? estimate_arithmetic(log)
                            : estimate_exp_smoothing(log, cfg.beta, cfg.priors);
    // Estimates beyond the grid extent carry no additional information for a
    // bounded phantom; clamp to keep scenario sets finite.
    const double half_span = 0.5 * (phantom.grid().hi() - phantom.grid().lo());
    est.systematic_mean = std::clamp(est.systematic_mean, -half_span, half_span);
    est.systematic_std = std::min(est.systematic_std, half_span);
    est.random_mean = std::clamp(est.random_mean, -half_span, half_span);
    est.random_std = std::min(est.random_std, half_span);
    return est;
}

namespace {

SigmaScenarioSet sigma_set_from_estimate(double random_std, const StrategyConfig& cfg) {
    if (cfg.sigma_scenario_points == 3)
        return SigmaScenarioSet::three_point(random_std, cfg.sigma_scenario_spread);
    return SigmaScenarioSet::single(random_std);
}

}  // namespace

AdaptationDecision adapt_scenario_update(const TrajectoryLog& log, const StrategyConfig& cfg,
                                         const RobustProblem& current,
                                         const SolverSettings& solver_settings,
                                         const VectorXd* warm_start, int fraction) {
    AdaptationDecision decision;
    decision.triggered = true;
    decision.estimate = run_estimator(log, cfg, *current.phantom);

    RobustProblem updated = current;
    updated.systematic =
        discretize_normal(decision.estimate.systematic_mean, decision.estimate.systematic_std,
                          current.phantom->grid().spacing, cfg.scenario_half_width);
    updated.sigma_set = sigma_set_from_estimate(decision.estimate.random_std, cfg);

    Plan plan = solve_robust(updated, solver_settings, warm_start);
    plan.created_at_fraction = fraction;
    decision.new_systematic = updated.systematic;
    decision.new_sigma = updated.sigma_set;
    decision.new_alpha = updated.alpha;
    decision.plan = std::move(plan);
    return decision;
}

AdaptationDecision adapt_alpha_update(const CriteriaOutcome& outcome,
                                      const std::vector<QualityCriterion>& criteria,
                                      const StrategyConfig& cfg, const RobustProblem& current,
                                      const Plan& current_plan,
                                      const SolverSettings& solver_settings,
                                      const VectorXd* warm_start, int fraction) {
    AdaptationDecision decision;
    decision.new_alpha = current.alpha;
    if (outcome.all_passed()) return decision;

    decision.triggered = true;
    // Coverage takes priority when both criterion families are violated.
    const double direction = outcome.coverage_violated(criteria) ? -1.0 : 1.0;
    decision.new_alpha =
        std::clamp(current.alpha + direction * cfg.alpha_step, cfg.alpha_min, cfg.alpha_max);

    if (decision.new_alpha == current.alpha) {
        // Clamped in place: the re-solve would reproduce the current plan.
        decision.plan = current_plan;
        decision.plan->created_at_fraction = fraction;
        return decision;
    }

    RobustProblem updated = current;
    updated.alpha = decision.new_alpha;
    Plan plan = solve_robust(updated, solver_settings, warm_start);
    plan.created_at_fraction = fraction;
    decision.plan = std::move(plan);
    return decision;
}

AdaptationDecision adapt_margin_update(const TrajectoryLog& log, const StrategyConfig& cfg,
                                       const Phantom& phantom, const ObjectiveSpec& nominal_spec,
                                       const SolverSettings& solver_settings, int fraction) {
    AdaptationDecision decision;
    decision.triggered = true;
    decision.estimate = run_estimator(log, cfg, phantom);
    decision.new_margin_mm =
        margin(decision.estimate.systematic_std, decision.estimate.random_std);
    decision.new_ptv =
        ptv_from_margin(phantom.roi_interval(RoiName::Ctv), decision.new_margin_mm, phantom.grid());

    const Phantom replanned = phantom.with_ptv(decision.new_ptv);
    Plan plan = solve_nominal(replanned, nominal_spec, solver_settings);
    plan.created_at_fraction = fraction;
    plan.margin_mm = decision.new_margin_mm;
    decision.plan = std::move(plan);
    return decision;
}

}  // namespace rtadapt
