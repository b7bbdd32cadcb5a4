#pragma once

#include "rtadapt/objective.hpp"
#include "rtadapt/phantom.hpp"
#include "rtadapt/solver.hpp"
#include "rtadapt/strategies.hpp"
#include "rtadapt/uncertainty.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rtadapt {

/// Named evaluation schedule; fractions are the treatment sessions after
/// which the delivered dose is checked (a subset of 1..N-1). An empty set is
/// the non-adaptive benchmark.
struct Schedule {
    std::string name = "none";
    std::vector<int> fractions;

    bool contains(int fraction) const;

    /// Built-in schedules: none, W{1..5}Eval1, W{1,2}Eval3, W{1,2}Eval4 and
    /// gold (evaluation after every fraction 1..N-1). Weeks are five
    /// fractions long.
    static std::optional<Schedule> builtin(const std::string& name, int total_fractions = 30);
    static std::vector<std::string> builtin_names();
};

enum class EvaluationMode {
    ScaledCumulative,    // delivered dose scaled by N/n against the final criteria
    ProjectedRemainder,  // delivered dose plus the current plan applied error-free
};

struct SimulationSettings {
    int fractions = 30;
    double prescription = 70.0;
    std::vector<QualityCriterion> criteria;
    EvaluationMode evaluation_mode = EvaluationMode::ScaledCumulative;
    /// Whether the adaptation at fraction n may use the shift measured at
    /// fraction n itself (evaluation happens after delivery).
    bool include_current_measurement = true;
    SolverSettings solver;
};

/// Everything shared across the patients of one run.
struct TreatmentSetup {
    const Phantom* phantom = nullptr;
    StrategyConfig strategy;
    Schedule schedule;
    SimulationSettings sim;
    Plan initial_plan;
    /// Robust problem behind the initial plan; the state strategies update.
    RobustProblem base_problem;
    /// Objective for nominal (re)planning, used by the margin strategy.
    ObjectiveSpec nominal_spec;
};

struct EvaluationRecord {
    int fraction = 0;
    bool triggered = false;
    bool adapted = false;
    bool solver_failed = false;
    std::vector<bool> passed;
    std::vector<double> dxx_pct;  // percent of prescription
    double alpha_after = 0.0;     // alpha-update strategy
    double margin_after = 0.0;    // margin-update strategy
};

struct PatientResult {
    bool success = false;
    std::vector<bool> criterion_passed;
    std::vector<double> final_dxx_pct;
    int adaptation_count = 0;
    bool any_solver_failure = false;
    double worst_abs_shift_mm = 0.0;
    std::vector<EvaluationRecord> evaluations;
    VectorXd cumulative_dose;
    TrajectoryLog trajectory;
};

/// Simulates one fractionated treatment: delivers the current plan at each
/// measured shift, evaluates the scheduled checkpoints, and adapts on
/// violation. A solver failure retains the current plan, marks the patient
/// failed and continues the treatment.
PatientResult simulate_patient(const TreatmentSetup& setup, const PatientErrors& errors);

struct PopulationReport {
    int size = 0;
    double success_rate_pct = 0.0;
    std::vector<double> criterion_fail_pct;
    std::vector<double> criterion_worst_pct;  // min for coverage, max for sparing criteria
    std::map<int, double> candidate_rate_pct; // per evaluation fraction
    double intersection_rate_pct = 0.0;       // candidates at every evaluation
    int most_common_adaptations = 0;
    double mean_adaptations = 0.0;
    int solver_failures = 0;
    std::vector<PatientResult> patients;
};

/// Runs `size` patients with per-patient seed base_seed + index. Results are
/// identical for any thread count.
PopulationReport run_population(const TreatmentSetup& setup, const PopulationSpec& population,
                                int size, std::uint64_t base_seed, int threads = 1);

/// Fraction of patients whose dose statistic meets each grid level (at least
/// for coverage statistics, at most for sparing ones).
VectorXd dose_probability_curve(const std::vector<double>& statistic_pct,
                                const Eigen::Ref<const VectorXd>& grid_pct, bool at_least);

struct BootstrapResult {
    VectorXd resampled_stds;
    double full_sample_std = 0.0;
    double resample_mean = 0.0;
    double resample_std = 0.0;  // spread of the bootstrap distribution
    VectorXd bin_centers;
    VectorXd densities;
};

/// Bootstrap of the population spread of the per-patient worst-case shift:
/// k resamples with replacement, each the size of the population, returning
/// the resampled standard deviations and a histogram density estimate.
BootstrapResult bootstrap_worst_error(const std::vector<double>& worst_errors, int k,
                                      std::uint64_t seed);

}  // namespace rtadapt
