#include "rtadapt/simulator.hpp"

#include "rtadapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace rtadapt {

bool Schedule::contains(int fraction) const {
    return std::find(fractions.begin(), fractions.end(), fraction) != fractions.end();
}

std::optional<Schedule> Schedule::builtin(const std::string& name, int total_fractions) {
    const int week = 5;
    auto make = [&](std::vector<int> f) { return Schedule{name, std::move(f)}; };
    if (name == "none") return make({});
    if (name == "gold") {
        std::vector<int> all(total_fractions - 1);
        std::iota(all.begin(), all.end(), 1);
        return make(std::move(all));
    }
    // WiEvalj: first evaluation after week i, j evaluations total, weekly
    // spacing except a two-week gap after the first check of W1Eval3/W1Eval4.
    if (name.size() == 7 && name.rfind("W", 0) == 0 && name.substr(2, 4) == "Eval") {
        const int first_week = name[1] - '0';
        const int count = name[6] - '0';
        if (first_week < 1 || first_week > 5 || (count != 1 && count != 3 && count != 4))
            return std::nullopt;
        if (count == 1) return make({first_week * week});
        if (first_week > 2) return std::nullopt;
        std::vector<int> fractions{first_week * week};
        int next = first_week == 1 ? 15 : first_week * week + week;
        while (static_cast<int>(fractions.size()) < count) {
            fractions.push_back(next);
            next += week;
        }
        return make(std::move(fractions));
    }
    return std::nullopt;
}

std::vector<std::string> Schedule::builtin_names() {
    return {"none",    "W1Eval1", "W2Eval1", "W3Eval1", "W4Eval1", "W5Eval1",
            "W1Eval3", "W2Eval3", "W1Eval4", "W2Eval4", "gold"};
}

namespace {

void validate_setup(const TreatmentSetup& setup) {
    if (!setup.phantom) throw std::invalid_argument("simulation setup has no phantom");
    if (setup.sim.criteria.empty()) throw std::invalid_argument("simulation needs quality criteria");
    for (int f : setup.schedule.fractions)
        if (f < 1 || f >= setup.sim.fractions)
            throw std::invalid_argument("evaluation fractions must lie in 1..N-1");
    const bool robust_strategy = setup.strategy.kind == StrategyKind::ScenarioUpdate ||
                                 setup.strategy.kind == StrategyKind::AlphaUpdate;
    if (robust_strategy && setup.initial_plan.provenance != Plan::Provenance::Robust)
        throw std::invalid_argument("scenario/alpha strategies require a robust initial plan");
    if (setup.strategy.kind == StrategyKind::MarginUpdate &&
        setup.initial_plan.provenance != Plan::Provenance::Nominal)
        throw std::invalid_argument("the margin strategy requires a nominal initial plan");
}

std::vector<double> dxx_as_pct(const CriteriaOutcome& outcome, double prescription) {
    std::vector<double> pct(outcome.dxx_value.size());
    for (size_t i = 0; i < outcome.dxx_value.size(); ++i)
        pct[i] = 100.0 * outcome.dxx_value[i] / prescription;
    return pct;
}

}  // namespace

PatientResult simulate_patient(const TreatmentSetup& setup, const PatientErrors& errors) {
    validate_setup(setup);
    const int n_fractions = setup.sim.fractions;
    const Phantom& phantom = *setup.phantom;

    PatientResult result;
    result.trajectory = TrajectoryLog{};
    result.cumulative_dose = VectorXd::Zero(phantom.grid().size());

    Plan current_plan = setup.initial_plan;
    RobustProblem current_problem = setup.base_problem;
    Phantom margin_phantom = phantom;  // margin strategy replans on updated PTVs

    for (int fraction = 1; fraction <= n_fractions; ++fraction) {
        const double shift = errors.shift_at(fraction);
        result.trajectory.record(shift);
        result.worst_abs_shift_mm = std::max(result.worst_abs_shift_mm, std::abs(shift));
        result.cumulative_dose +=
            phantom.dose(current_plan.fluence, shift) / static_cast<double>(n_fractions);

        if (!setup.schedule.contains(fraction)) continue;

        VectorXd eval_dose;
        if (setup.sim.evaluation_mode == EvaluationMode::ScaledCumulative) {
            eval_dose = result.cumulative_dose * (static_cast<double>(n_fractions) / fraction);
        } else {
            eval_dose = result.cumulative_dose +
                        (static_cast<double>(n_fractions - fraction) / n_fractions) *
                            phantom.dose(current_plan.fluence, 0.0);
        }
        const CriteriaOutcome outcome =
            evaluate_criteria(eval_dose, phantom, setup.sim.criteria, setup.sim.prescription);

        EvaluationRecord record;
        record.fraction = fraction;
        record.passed = outcome.passed;
        record.dxx_pct = dxx_as_pct(outcome, setup.sim.prescription);
        record.triggered = !outcome.all_passed();
        record.alpha_after = current_problem.alpha;
        record.margin_after = current_plan.margin_mm;

        const bool estimator_strategy = setup.strategy.kind == StrategyKind::ScenarioUpdate ||
                                        setup.strategy.kind == StrategyKind::MarginUpdate;
        TrajectoryLog window = result.trajectory;
        if (!setup.sim.include_current_measurement) window.shifts.pop_back();
        // Estimator-driven strategies need at least one measurement beyond
        // the planning position.
        const bool can_adapt = !estimator_strategy || window.size() >= 2;
        if (record.triggered && setup.strategy.kind != StrategyKind::None && can_adapt) {
            try {
                AdaptationDecision decision;
                switch (setup.strategy.kind) {
                    case StrategyKind::ScenarioUpdate:
                        decision = adapt_scenario_update(window, setup.strategy, current_problem,
                                                         setup.sim.solver, &current_plan.fluence,
                                                         fraction);
                        current_problem.systematic = decision.new_systematic;
                        current_problem.sigma_set = decision.new_sigma;
                        break;
                    case StrategyKind::AlphaUpdate:
                        decision = adapt_alpha_update(outcome, setup.sim.criteria, setup.strategy,
                                                      current_problem, current_plan,
                                                      setup.sim.solver, &current_plan.fluence,
                                                      fraction);
                        current_problem.alpha = decision.new_alpha;
                        break;
                    case StrategyKind::MarginUpdate:
                        decision = adapt_margin_update(window, setup.strategy, margin_phantom,
                                                       setup.nominal_spec, setup.sim.solver,
                                                       fraction);
                        margin_phantom = phantom.with_ptv(decision.new_ptv);
                        break;
                    case StrategyKind::None:
                        break;
                }
                if (decision.plan) {
                    current_plan = *decision.plan;
                    record.adapted = true;
                    ++result.adaptation_count;
                }
                record.alpha_after = current_problem.alpha;
                record.margin_after = current_plan.margin_mm;
            } catch (const SolverError&) {
                // Keep treating with the current plan; the patient is marked
                // failed but the run continues.
                record.solver_failed = true;
                result.any_solver_failure = true;
            }
        }
        result.evaluations.push_back(std::move(record));
    }

    const CriteriaOutcome final_outcome = evaluate_criteria(
        result.cumulative_dose, phantom, setup.sim.criteria, setup.sim.prescription);
    result.criterion_passed = final_outcome.passed;
    result.final_dxx_pct = dxx_as_pct(final_outcome, setup.sim.prescription);
    result.success = final_outcome.all_passed() && !result.any_solver_failure;
    return result;
}

PopulationReport run_population(const TreatmentSetup& setup, const PopulationSpec& population,
                                int size, std::uint64_t base_seed, int threads) {
    validate_setup(setup);
    if (size < 1) throw std::invalid_argument("population size must be >= 1");
    threads = std::max(1, threads);

    std::vector<PatientResult> patients(size);
    std::exception_ptr worker_error;
    std::mutex error_mutex;
    auto worker = [&](int first) {
        for (int i = first; i < size; i += threads) {
            try {
                const PatientErrors errors =
                    sample_patient(population, setup.sim.fractions, base_seed + i);
                patients[i] = simulate_patient(setup, errors);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!worker_error) worker_error = std::current_exception();
                return;
            }
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (std::thread& t : pool) t.join();
    }
    if (worker_error) std::rethrow_exception(worker_error);

    PopulationReport report;
    report.size = size;
    report.patients = std::move(patients);

    const size_t n_criteria = setup.sim.criteria.size();
    report.criterion_fail_pct.assign(n_criteria, 0.0);
    report.criterion_worst_pct.assign(n_criteria, 0.0);
    for (size_t c = 0; c < n_criteria; ++c) {
        const bool coverage =
            setup.sim.criteria[c].direction == QualityCriterion::Direction::AtLeast;
        double worst = coverage ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
        int failures = 0;
        for (const PatientResult& p : report.patients) {
            if (!p.criterion_passed[c]) ++failures;
            worst = coverage ? std::min(worst, p.final_dxx_pct[c])
                             : std::max(worst, p.final_dxx_pct[c]);
        }
        report.criterion_fail_pct[c] = 100.0 * failures / size;
        report.criterion_worst_pct[c] = worst;
    }

    int successes = 0;
    std::map<int, int> adaptation_histogram;
    long total_adaptations = 0;
    std::map<int, int> triggered_at;
    int triggered_everywhere = 0;
    for (const PatientResult& p : report.patients) {
        if (p.success) ++successes;
        if (p.any_solver_failure) ++report.solver_failures;
        ++adaptation_histogram[p.adaptation_count];
        total_adaptations += p.adaptation_count;
        bool all_triggered = !setup.schedule.fractions.empty();
        for (const EvaluationRecord& e : p.evaluations) {
            if (e.triggered) ++triggered_at[e.fraction];
            all_triggered = all_triggered && e.triggered;
        }
        if (all_triggered) ++triggered_everywhere;
    }
    report.success_rate_pct = 100.0 * successes / size;
    for (int f : setup.schedule.fractions)
        report.candidate_rate_pct[f] = 100.0 * triggered_at[f] / size;
    report.intersection_rate_pct = 100.0 * triggered_everywhere / size;
    report.mean_adaptations = static_cast<double>(total_adaptations) / size;
    int best_count = -1;
    for (const auto& [count, patients_n] : adaptation_histogram)
        if (patients_n > best_count) {
            best_count = patients_n;
            report.most_common_adaptations = count;
        }
    return report;
}

VectorXd dose_probability_curve(const std::vector<double>& statistic_pct,
                                const Eigen::Ref<const VectorXd>& grid_pct, bool at_least) {
    VectorXd curve(grid_pct.size());
    if (statistic_pct.empty()) throw std::invalid_argument("no statistics to aggregate");
    for (int i = 0; i < grid_pct.size(); ++i) {
        int count = 0;
        for (double v : statistic_pct)
            if (at_least ? v >= grid_pct(i) : v <= grid_pct(i)) ++count;
        curve(i) = static_cast<double>(count) / static_cast<double>(statistic_pct.size());
    }
    return curve;
}

BootstrapResult bootstrap_worst_error(const std::vector<double>& worst_errors, int k,
                                      std::uint64_t seed) {
    if (worst_errors.empty()) throw std::invalid_argument("bootstrap needs at least one value");
    if (k < 1) throw std::invalid_argument("bootstrap needs at least one resample");
    const size_t n = worst_errors.size();

    auto population_std = [](const std::vector<double>& values) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        return std::sqrt(var / static_cast<double>(values.size()));
    };

    BootstrapResult result;
    result.full_sample_std = population_std(worst_errors);

    Rng rng(seed);
    result.resampled_stds.resize(k);
    std::vector<double> resample(n);
    for (int r = 0; r < k; ++r) {
        for (size_t i = 0; i < n; ++i) resample[i] = worst_errors[rng.index(n)];
        result.resampled_stds(r) = population_std(resample);
    }
    result.resample_mean = result.resampled_stds.mean();
    result.resample_std = std::sqrt(
        (result.resampled_stds.array() - result.resample_mean).square().sum() / std::max(1, k));

    // Histogram density over the resampled values.
    const double lo = result.resampled_stds.minCoeff();
    const double hi = result.resampled_stds.maxCoeff();
    const int bins = hi > lo ? std::clamp(k / 10, 5, 40) : 1;
    const double width = hi > lo ? (hi - lo) / bins : 1.0;
    result.bin_centers.resize(bins);
    result.densities = VectorXd::Zero(bins);
    for (int b = 0; b < bins; ++b) result.bin_centers(b) = lo + (b + 0.5) * width;
    for (int r = 0; r < k; ++r) {
        int b = hi > lo ? static_cast<int>((result.resampled_stds(r) - lo) / width) : 0;
        b = std::clamp(b, 0, bins - 1);
        result.densities(b) += 1.0;
    }
    result.densities /= static_cast<double>(k) * width;
    return result;
}

}  // namespace rtadapt
