#pragma once

#include "rtadapt/objective.hpp"
#include "rtadapt/phantom.hpp"
#include "rtadapt/simulator.hpp"
#include "rtadapt/solver.hpp"
#include "rtadapt/strategies.hpp"
#include "rtadapt/uncertainty.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace rtadapt {

/// Configuration problem with the offending field path in the message.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

/// Locale-independent shortest round-trip formatting.
std::string format_double(double value);

enum class PlanKind { Nominal, Robust, Both };

/// One run: a phantom, an objective, quality criteria, a population, a
/// strategy and a schedule, plus solver and output settings. Parsed from a
/// plain-text key-value file with units spelled out in the field names.
struct RunConfig {
    PhantomConfig phantom;

    double prescription = 70.0;
    double target_weight = 1.0;
    // Separate weight sets: the nominal problem needs only a light touch on
    // the OARs to keep its PTV coverage, while the robust problem trades
    // coverage against sparing.
    double nominal_right_oar_weight = 0.001;
    double nominal_left_oar_weight = 0.003;
    double nominal_external_weight = 0.001;
    double robust_right_oar_weight = 0.015;
    double robust_left_oar_weight = 0.009;
    double robust_external_weight = 0.001;

    double ctv_d99_min_pct = 90.0;
    // The OAR ceilings are deliberately unset by default: every config file
    // must state them explicitly.
    std::optional<double> right_oar_d30_max_pct;
    std::optional<double> left_oar_d20_max_pct;

    // A-priori error model behind the initial robust plan.
    double planning_systematic_mean_mm = 0.0;
    double planning_systematic_std_mm = 2.5;
    double planning_random_std_mm = 6.5;
    double scenario_half_width_sigmas = 3.0;
    int sigma_scenario_points = 1;
    double sigma_scenario_spread = 0.25;

    std::string population_kind = "small";  // small | large | custom
    MeanModel population_systematic_mean = MeanModel::fixed(0.0);
    double population_systematic_std_mm = 2.5;
    MeanModel population_random_mean = MeanModel::fixed(0.0);
    double population_random_std_mm = 6.5;

    StrategyConfig strategy;
    std::string schedule_name = "none";
    std::optional<std::vector<int>> schedule_fractions;  // explicit override

    SolverSettings solver;

    PlanKind plan_kind = PlanKind::Robust;
    int fractions = 30;
    int patients = 1000;
    std::uint64_t base_seed = 20240101;
    int threads = 1;
    std::string output_dir = "out";
    EvaluationMode evaluation_mode = EvaluationMode::ScaledCumulative;
    bool include_current_measurement = true;

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& config);

/// Cross-field validation (mandatory OAR ceilings, plan/strategy agreement,
/// positive sizes). Throws ConfigError with the field path.
void validate_config(const RunConfig& config);

/// Derived pieces.
PopulationSpec population_from_config(const RunConfig& config);
std::vector<QualityCriterion> criteria_from_config(const RunConfig& config);
ObjectiveSpec objective_from_config(const RunConfig& config, RoiName target);
Schedule schedule_from_config(const RunConfig& config);
DiscreteScenarioSet planning_scenarios_from_config(const RunConfig& config, const Phantom& phantom);
SigmaScenarioSet planning_sigma_set_from_config(const RunConfig& config);

/// Versioned plain-text plan artifact; loss-less fluence round trip.
void save_plan(const Plan& plan, const std::string& path);
Plan load_plan(const std::string& path);

/// Everything a run needs, built once from a validated config. RobustProblem
/// and TreatmentSetup returned by the helpers point at `phantom`, so the
/// assets must outlive them.
struct RunAssets {
    Phantom phantom;
    std::vector<QualityCriterion> criteria;
    ObjectiveSpec robust_spec;
    ObjectiveSpec nominal_spec;
    Schedule schedule;
    PopulationSpec population;
};

RunAssets build_assets(const RunConfig& config);
RobustProblem robust_problem(const RunAssets& assets, const RunConfig& config);
TreatmentSetup make_treatment_setup(const RunAssets& assets, const RunConfig& config,
                                    Plan initial_plan);

}  // namespace rtadapt
