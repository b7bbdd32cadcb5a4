#include "rtadapt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace rtadapt {

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) return "nan";
    return std::string(buf, end);
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> words;
    std::istringstream in(s);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

double to_double(const std::string& field, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(field + ": expected a number, got '" + value + "'");
    }
}

long to_long(const std::string& field, const std::string& value) {
    try {
        size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(field + ": expected an integer, got '" + value + "'");
    }
}

bool to_bool(const std::string& field, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(field + ": expected true/false, got '" + value + "'");
}

Interval to_interval(const std::string& field, const std::string& value) {
    const auto words = split_words(value);
    if (words.size() != 2) throw ConfigError(field + ": expected two numbers 'lo hi'");
    return Interval{to_double(field, words[0]), to_double(field, words[1])};
}

MeanModel to_mean_model(const std::string& field, const std::string& value) {
    const auto words = split_words(value);
    if (words.size() == 1) return MeanModel::fixed(to_double(field, words[0]));
    if (words.size() == 3 && words[0] == "uniform")
        return MeanModel::uniform(to_double(field, words[1]), to_double(field, words[2]));
    throw ConfigError(field + ": expected '<mm>' or 'uniform <lo> <hi>'");
}

std::string mean_model_text(const MeanModel& m) {
    if (m.kind == MeanModel::Kind::Fixed) return format_double(m.value);
    return "uniform " + format_double(m.lo) + " " + format_double(m.hi);
}

StrategyKind to_strategy_kind(const std::string& field, const std::string& value) {
    if (value == "none") return StrategyKind::None;
    if (value == "scenario_update") return StrategyKind::ScenarioUpdate;
    if (value == "alpha_update") return StrategyKind::AlphaUpdate;
    if (value == "margin_update") return StrategyKind::MarginUpdate;
    throw ConfigError(field + ": unknown strategy '" + value + "'");
}

std::string strategy_kind_text(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::None: return "none";
        case StrategyKind::ScenarioUpdate: return "scenario_update";
        case StrategyKind::AlphaUpdate: return "alpha_update";
        case StrategyKind::MarginUpdate: return "margin_update";
    }
    return "none";
}

}  // namespace

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string section;
    std::string line;
    int line_no = 0;
    std::map<std::string, bool> seen;

    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string field = section.empty() ? key : section + "." + key;
        if (seen[field]) throw ConfigError(field + ": duplicate entry");
        seen[field] = true;

        if (field == "phantom.grid_lo_mm") cfg.phantom.grid_lo_mm = to_double(field, value);
        else if (field == "phantom.grid_hi_mm") cfg.phantom.grid_hi_mm = to_double(field, value);
        else if (field == "phantom.spacing_mm") cfg.phantom.spacing_mm = to_double(field, value);
        else if (field == "phantom.kernel_sigma_mm") cfg.phantom.kernel_sigma_mm = to_double(field, value);
        else if (field == "phantom.beamlet_spacing_mm") cfg.phantom.beamlet_spacing_mm = to_double(field, value);
        else if (field == "phantom.ctv_mm") cfg.phantom.ctv = to_interval(field, value);
        else if (field == "phantom.left_oar_mm") cfg.phantom.left_oar = to_interval(field, value);
        else if (field == "phantom.right_oar_mm") cfg.phantom.right_oar = to_interval(field, value);
        else if (field == "phantom.ptv_mm") cfg.phantom.ptv = to_interval(field, value);
        else if (field == "phantom.prior_systematic_std_mm") cfg.phantom.prior_systematic_std_mm = to_double(field, value);
        else if (field == "phantom.prior_random_std_mm") cfg.phantom.prior_random_std_mm = to_double(field, value);
        else if (field == "objective.prescription_dose") cfg.prescription = to_double(field, value);
        else if (field == "objective.target_weight") cfg.target_weight = to_double(field, value);
        else if (field == "objective.nominal_right_oar_weight") cfg.nominal_right_oar_weight = to_double(field, value);
        else if (field == "objective.nominal_left_oar_weight") cfg.nominal_left_oar_weight = to_double(field, value);
        else if (field == "objective.nominal_external_weight") cfg.nominal_external_weight = to_double(field, value);
        else if (field == "objective.robust_right_oar_weight") cfg.robust_right_oar_weight = to_double(field, value);
        else if (field == "objective.robust_left_oar_weight") cfg.robust_left_oar_weight = to_double(field, value);
        else if (field == "objective.robust_external_weight") cfg.robust_external_weight = to_double(field, value);
        else if (field == "criteria.ctv_d99_min_pct") cfg.ctv_d99_min_pct = to_double(field, value);
        else if (field == "criteria.right_oar_d30_max_pct") cfg.right_oar_d30_max_pct = to_double(field, value);
        else if (field == "criteria.left_oar_d20_max_pct") cfg.left_oar_d20_max_pct = to_double(field, value);
        else if (field == "uncertainty.planning_systematic_mean_mm") cfg.planning_systematic_mean_mm = to_double(field, value);
        else if (field == "uncertainty.planning_systematic_std_mm") cfg.planning_systematic_std_mm = to_double(field, value);
        else if (field == "uncertainty.planning_random_std_mm") cfg.planning_random_std_mm = to_double(field, value);
        else if (field == "uncertainty.scenario_half_width_sigmas") cfg.scenario_half_width_sigmas = to_double(field, value);
        else if (field == "uncertainty.sigma_scenario_points") cfg.sigma_scenario_points = static_cast<int>(to_long(field, value));
        else if (field == "uncertainty.sigma_scenario_spread") cfg.sigma_scenario_spread = to_double(field, value);
        else if (field == "population.kind") cfg.population_kind = value;
        else if (field == "population.systematic_mean_mm") cfg.population_systematic_mean = to_mean_model(field, value);
        else if (field == "population.systematic_std_mm") cfg.population_systematic_std_mm = to_double(field, value);
        else if (field == "population.random_mean_mm") cfg.population_random_mean = to_mean_model(field, value);
        else if (field == "population.random_std_mm") cfg.population_random_std_mm = to_double(field, value);
        else if (field == "strategy.kind") cfg.strategy.kind = to_strategy_kind(field, value);
        else if (field == "strategy.estimator") {
            if (value == "arithmetic") cfg.strategy.estimator = EstimatorKind::Arithmetic;
            else if (value == "exp_smoothing") cfg.strategy.estimator = EstimatorKind::ExpSmoothing;
            else throw ConfigError(field + ": unknown estimator '" + value + "'");
        }
        else if (field == "strategy.beta") cfg.strategy.beta = to_double(field, value);
        else if (field == "strategy.alpha_initial") cfg.strategy.alpha_initial = to_double(field, value);
        else if (field == "strategy.alpha_step") cfg.strategy.alpha_step = to_double(field, value);
        else if (field == "strategy.alpha_min") cfg.strategy.alpha_min = to_double(field, value);
        else if (field == "strategy.alpha_max") cfg.strategy.alpha_max = to_double(field, value);
        else if (field == "schedule.name") cfg.schedule_name = value;
        else if (field == "schedule.fractions") {
            std::vector<int> fractions;
            for (const std::string& w : split_words(value))
                fractions.push_back(static_cast<int>(to_long(field, w)));
            cfg.schedule_fractions = std::move(fractions);
        }
        else if (field == "solver.gap_tol_rel") cfg.solver.gap_tol_rel = to_double(field, value);
        else if (field == "solver.stationarity_tol") cfg.solver.stationarity_tol = to_double(field, value);
        else if (field == "solver.max_newton_total") cfg.solver.max_newton_total = static_cast<int>(to_long(field, value));
        else if (field == "solver.warm_start") cfg.solver.warm_start = to_bool(field, value);
        else if (field == "run.plan") {
            if (value == "nominal") cfg.plan_kind = PlanKind::Nominal;
            else if (value == "robust") cfg.plan_kind = PlanKind::Robust;
            else if (value == "both") cfg.plan_kind = PlanKind::Both;
            else throw ConfigError(field + ": expected nominal/robust/both");
        }
        else if (field == "run.fractions") cfg.fractions = static_cast<int>(to_long(field, value));
        else if (field == "run.patients") cfg.patients = static_cast<int>(to_long(field, value));
        else if (field == "run.base_seed") cfg.base_seed = static_cast<std::uint64_t>(to_long(field, value));
        else if (field == "run.threads") cfg.threads = static_cast<int>(to_long(field, value));
        else if (field == "run.output_dir") cfg.output_dir = value;
        else if (field == "run.evaluation_mode") {
            if (value == "scaled") cfg.evaluation_mode = EvaluationMode::ScaledCumulative;
            else if (value == "projected") cfg.evaluation_mode = EvaluationMode::ProjectedRemainder;
            else throw ConfigError(field + ": expected scaled/projected");
        }
        else if (field == "run.include_current_measurement") cfg.include_current_measurement = to_bool(field, value);
        else throw ConfigError(field + ": unknown field");
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "[phantom]\n";
    out << "grid_lo_mm = " << format_double(c.phantom.grid_lo_mm) << "\n";
    out << "grid_hi_mm = " << format_double(c.phantom.grid_hi_mm) << "\n";
    out << "spacing_mm = " << format_double(c.phantom.spacing_mm) << "\n";
    out << "kernel_sigma_mm = " << format_double(c.phantom.kernel_sigma_mm) << "\n";
    if (c.phantom.beamlet_spacing_mm > 0.0)
        out << "beamlet_spacing_mm = " << format_double(c.phantom.beamlet_spacing_mm) << "\n";
    out << "ctv_mm = " << format_double(c.phantom.ctv.lo) << " " << format_double(c.phantom.ctv.hi) << "\n";
    out << "left_oar_mm = " << format_double(c.phantom.left_oar.lo) << " " << format_double(c.phantom.left_oar.hi) << "\n";
    out << "right_oar_mm = " << format_double(c.phantom.right_oar.lo) << " " << format_double(c.phantom.right_oar.hi) << "\n";
    if (c.phantom.ptv)
        out << "ptv_mm = " << format_double(c.phantom.ptv->lo) << " " << format_double(c.phantom.ptv->hi) << "\n";
    out << "prior_systematic_std_mm = " << format_double(c.phantom.prior_systematic_std_mm) << "\n";
    out << "prior_random_std_mm = " << format_double(c.phantom.prior_random_std_mm) << "\n";
    out << "\n[objective]\n";
    out << "prescription_dose = " << format_double(c.prescription) << "\n";
    out << "target_weight = " << format_double(c.target_weight) << "\n";
    out << "nominal_right_oar_weight = " << format_double(c.nominal_right_oar_weight) << "\n";
    out << "nominal_left_oar_weight = " << format_double(c.nominal_left_oar_weight) << "\n";
    out << "nominal_external_weight = " << format_double(c.nominal_external_weight) << "\n";
    out << "robust_right_oar_weight = " << format_double(c.robust_right_oar_weight) << "\n";
    out << "robust_left_oar_weight = " << format_double(c.robust_left_oar_weight) << "\n";
    out << "robust_external_weight = " << format_double(c.robust_external_weight) << "\n";
    out << "\n[criteria]\n";
    out << "ctv_d99_min_pct = " << format_double(c.ctv_d99_min_pct) << "\n";
    if (c.right_oar_d30_max_pct)
        out << "right_oar_d30_max_pct = " << format_double(*c.right_oar_d30_max_pct) << "\n";
    if (c.left_oar_d20_max_pct)
        out << "left_oar_d20_max_pct = " << format_double(*c.left_oar_d20_max_pct) << "\n";
    out << "\n[uncertainty]\n";
    out << "planning_systematic_mean_mm = " << format_double(c.planning_systematic_mean_mm) << "\n";
    out << "planning_systematic_std_mm = " << format_double(c.planning_systematic_std_mm) << "\n";
    out << "planning_random_std_mm = " << format_double(c.planning_random_std_mm) << "\n";
    out << "scenario_half_width_sigmas = " << format_double(c.scenario_half_width_sigmas) << "\n";
    out << "sigma_scenario_points = " << c.sigma_scenario_points << "\n";
    out << "sigma_scenario_spread = " << format_double(c.sigma_scenario_spread) << "\n";
    out << "\n[population]\n";
    out << "kind = " << c.population_kind << "\n";
    if (c.population_kind == "custom") {
        out << "systematic_mean_mm = " << mean_model_text(c.population_systematic_mean) << "\n";
        out << "systematic_std_mm = " << format_double(c.population_systematic_std_mm) << "\n";
        out << "random_mean_mm = " << mean_model_text(c.population_random_mean) << "\n";
        out << "random_std_mm = " << format_double(c.population_random_std_mm) << "\n";
    }
    out << "\n[strategy]\n";
    out << "kind = " << strategy_kind_text(c.strategy.kind) << "\n";
    out << "estimator = "
        << (c.strategy.estimator == EstimatorKind::Arithmetic ? "arithmetic" : "exp_smoothing") << "\n";
    out << "beta = " << format_double(c.strategy.beta) << "\n";
    out << "alpha_initial = " << format_double(c.strategy.alpha_initial) << "\n";
    out << "alpha_step = " << format_double(c.strategy.alpha_step) << "\n";
    out << "alpha_min = " << format_double(c.strategy.alpha_min) << "\n";
    out << "alpha_max = " << format_double(c.strategy.alpha_max) << "\n";
    out << "\n[schedule]\n";
    out << "name = " << c.schedule_name << "\n";
    if (c.schedule_fractions) {
        out << "fractions =";
        for (int f : *c.schedule_fractions) out << " " << f;
        out << "\n";
    }
    out << "\n[solver]\n";
    out << "gap_tol_rel = " << format_double(c.solver.gap_tol_rel) << "\n";
    out << "stationarity_tol = " << format_double(c.solver.stationarity_tol) << "\n";
    out << "max_newton_total = " << c.solver.max_newton_total << "\n";
    out << "warm_start = " << (c.solver.warm_start ? "true" : "false") << "\n";
    out << "\n[run]\n";
    const char* plan_text = c.plan_kind == PlanKind::Nominal  ? "nominal"
                            : c.plan_kind == PlanKind::Robust ? "robust"
                                                              : "both";
    out << "plan = " << plan_text << "\n";
    out << "fractions = " << c.fractions << "\n";
    out << "patients = " << c.patients << "\n";
    out << "base_seed = " << c.base_seed << "\n";
    out << "threads = " << c.threads << "\n";
    out << "output_dir = " << c.output_dir << "\n";
    out << "evaluation_mode = "
        << (c.evaluation_mode == EvaluationMode::ScaledCumulative ? "scaled" : "projected") << "\n";
    out << "include_current_measurement = " << (c.include_current_measurement ? "true" : "false")
        << "\n";
    return out.str();
}

void validate_config(const RunConfig& c) {
    if (!c.right_oar_d30_max_pct)
        throw ConfigError("criteria.right_oar_d30_max_pct: missing (no default is provided)");
    if (!c.left_oar_d20_max_pct)
        throw ConfigError("criteria.left_oar_d20_max_pct: missing (no default is provided)");
    if (c.patients < 1) throw ConfigError("run.patients: must be >= 1");
    if (c.fractions < 1) throw ConfigError("run.fractions: must be >= 1");
    if (c.threads < 0) throw ConfigError("run.threads: must be >= 0");
    if (c.prescription <= 0) throw ConfigError("objective.prescription_dose: must be positive");
    if (c.strategy.beta < 0 || c.strategy.beta > 1)
        throw ConfigError("strategy.beta: must lie in [0, 1]");
    if (c.strategy.alpha_initial <= 0 || c.strategy.alpha_initial > 1)
        throw ConfigError("strategy.alpha_initial: must lie in (0, 1]");
    if (c.sigma_scenario_points != 1 && c.sigma_scenario_points != 3)
        throw ConfigError("uncertainty.sigma_scenario_points: must be 1 or 3");
    if (c.population_kind != "small" && c.population_kind != "large" && c.population_kind != "custom")
        throw ConfigError("population.kind: expected small/large/custom");
    if (!c.schedule_fractions && !Schedule::builtin(c.schedule_name, c.fractions))
        throw ConfigError("schedule.name: unknown schedule '" + c.schedule_name + "'");
    const bool robust_strategy = c.strategy.kind == StrategyKind::ScenarioUpdate ||
                                 c.strategy.kind == StrategyKind::AlphaUpdate;
    if (robust_strategy && c.plan_kind == PlanKind::Nominal)
        throw ConfigError("run.plan: scenario/alpha strategies require the robust plan");
    if (c.strategy.kind == StrategyKind::MarginUpdate && c.plan_kind == PlanKind::Robust)
        throw ConfigError("run.plan: the margin strategy requires the nominal plan");
    if (c.strategy.kind != StrategyKind::None && c.schedule_name == "none" && !c.schedule_fractions)
        throw ConfigError("schedule.name: adaptive strategies need a nonempty schedule");
}

PopulationSpec population_from_config(const RunConfig& c) {
    if (c.population_kind == "small") return PopulationSpec::small_error();
    if (c.population_kind == "large") return PopulationSpec::large_error();
    PopulationSpec spec;
    spec.systematic_mean = c.population_systematic_mean;
    spec.systematic_std = c.population_systematic_std_mm;
    spec.random_mean = c.population_random_mean;
    spec.random_std = c.population_random_std_mm;
    return spec;
}

std::vector<QualityCriterion> criteria_from_config(const RunConfig& c) {
    std::vector<QualityCriterion> criteria =
        standard_criteria(*c.right_oar_d30_max_pct, *c.left_oar_d20_max_pct);
    criteria[0].dose_pct = c.ctv_d99_min_pct;
    return criteria;
}

ObjectiveSpec objective_from_config(const RunConfig& c, RoiName target) {
    ObjectiveSpec spec;
    spec.target = target;
    spec.prescription = c.prescription;
    spec.target_weight = c.target_weight;
    if (target == RoiName::Ctv) {
        spec.right_oar_weight = c.robust_right_oar_weight;
        spec.left_oar_weight = c.robust_left_oar_weight;
        spec.external_weight = c.robust_external_weight;
    } else {
        spec.right_oar_weight = c.nominal_right_oar_weight;
        spec.left_oar_weight = c.nominal_left_oar_weight;
        spec.external_weight = c.nominal_external_weight;
    }
    return spec;
}

Schedule schedule_from_config(const RunConfig& c) {
    if (c.schedule_fractions) {
        Schedule s;
        s.name = c.schedule_name == "none" ? "custom" : c.schedule_name;
        s.fractions = *c.schedule_fractions;
        return s;
    }
    auto s = Schedule::builtin(c.schedule_name, c.fractions);
    if (!s) throw ConfigError("schedule.name: unknown schedule '" + c.schedule_name + "'");
    return *s;
}

DiscreteScenarioSet planning_scenarios_from_config(const RunConfig& c, const Phantom& phantom) {
    return discretize_normal(c.planning_systematic_mean_mm, c.planning_systematic_std_mm,
                             phantom.grid().spacing, c.scenario_half_width_sigmas);
}

SigmaScenarioSet planning_sigma_set_from_config(const RunConfig& c) {
    if (c.sigma_scenario_points == 3)
        return SigmaScenarioSet::three_point(c.planning_random_std_mm, c.sigma_scenario_spread);
    return SigmaScenarioSet::single(c.planning_random_std_mm);
}

void save_plan(const Plan& plan, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write plan file '" + path + "'");
    const bool robust = plan.provenance == Plan::Provenance::Robust;
    const char* provenance = !robust ? "nominal" : (plan.alpha == 1.0 ? "probabilistic" : "robust");
    out << "rtadapt-plan v1\n";
    out << "provenance " << provenance << "\n";
    if (robust) out << "alpha " << format_double(plan.alpha) << "\n";
    else out << "margin_mm " << format_double(plan.margin_mm) << "\n";
    out << "created_at_fraction " << plan.created_at_fraction << "\n";
    out << "objective " << format_double(plan.objective) << "\n";
    out << "fluence " << plan.fluence.size() << "\n";
    for (int i = 0; i < plan.fluence.size(); ++i) out << format_double(plan.fluence(i)) << "\n";
}

Plan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open plan file '" + path + "'");
    std::string header;
    std::getline(in, header);
    if (header != "rtadapt-plan v1") throw ConfigError(path + ": not a v1 plan file");

    Plan plan;
    std::string key;
    while (in >> key) {
        if (key == "provenance") {
            std::string value;
            in >> value;
            if (value == "nominal") plan.provenance = Plan::Provenance::Nominal;
            else if (value == "robust" || value == "probabilistic") {
                plan.provenance = Plan::Provenance::Robust;
                if (value == "probabilistic") plan.alpha = 1.0;
            } else throw ConfigError(path + ": unknown provenance '" + value + "'");
        } else if (key == "alpha") in >> plan.alpha;
        else if (key == "margin_mm") in >> plan.margin_mm;
        else if (key == "created_at_fraction") in >> plan.created_at_fraction;
        else if (key == "objective") in >> plan.objective;
        else if (key == "fluence") {
            int n = 0;
            in >> n;
            if (n < 0) throw ConfigError(path + ": bad fluence count");
            plan.fluence.resize(n);
            for (int i = 0; i < n; ++i) in >> plan.fluence(i);
        } else throw ConfigError(path + ": unknown plan field '" + key + "'");
    }
    if (!in.eof() && in.fail()) throw ConfigError(path + ": malformed plan file");
    return plan;
}

RunAssets build_assets(const RunConfig& config) {
    RunAssets assets{Phantom::build(config.phantom),
                     criteria_from_config(config),
                     objective_from_config(config, RoiName::Ctv),
                     objective_from_config(config, RoiName::Ptv),
                     schedule_from_config(config),
                     population_from_config(config)};
    return assets;
}

RobustProblem robust_problem(const RunAssets& assets, const RunConfig& config) {
    RobustProblem problem;
    problem.phantom = &assets.phantom;
    problem.spec = assets.robust_spec;
    problem.systematic = planning_scenarios_from_config(config, assets.phantom);
    problem.sigma_set = planning_sigma_set_from_config(config);
    problem.fractions = config.fractions;
    problem.alpha = config.strategy.alpha_initial;
    problem.scenario_half_width = config.scenario_half_width_sigmas;
    return problem;
}

TreatmentSetup make_treatment_setup(const RunAssets& assets, const RunConfig& config,
                                    Plan initial_plan) {
    TreatmentSetup setup;
    setup.phantom = &assets.phantom;
    setup.strategy = config.strategy;
    setup.strategy.priors.systematic_std = config.planning_systematic_std_mm;
    setup.strategy.priors.random_std = config.planning_random_std_mm;
    setup.strategy.sigma_scenario_points = config.sigma_scenario_points;
    setup.strategy.sigma_scenario_spread = config.sigma_scenario_spread;
    setup.strategy.scenario_half_width = config.scenario_half_width_sigmas;
    setup.schedule = assets.schedule;
    setup.sim.fractions = config.fractions;
    setup.sim.prescription = config.prescription;
    setup.sim.criteria = assets.criteria;
    setup.sim.evaluation_mode = config.evaluation_mode;
    setup.sim.include_current_measurement = config.include_current_measurement;
    setup.sim.solver = config.solver;
    setup.initial_plan = std::move(initial_plan);
    setup.base_problem = robust_problem(assets, config);
    setup.nominal_spec = assets.nominal_spec;
    return setup;
}

}  // namespace rtadapt
