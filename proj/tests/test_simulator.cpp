#include "rtadapt/simulator.hpp"
#include "rtadapt/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace rtadapt;

namespace {

PhantomConfig small_config() {
    PhantomConfig c;
    c.grid_lo_mm = -10.0;
    c.grid_hi_mm = 10.0;
    c.spacing_mm = 1.0;
    c.kernel_sigma_mm = 2.0;
    c.ctv = {-3.0, 3.0};
    c.left_oar = {-10.0, -6.0};
    c.right_oar = {5.0, 10.0};
    c.prior_systematic_std_mm = 1.0;
    c.prior_random_std_mm = 1.0;
    return c;
}

struct Fixture {
    Phantom phantom = Phantom::build(small_config());
    TreatmentSetup setup;

    explicit Fixture(StrategyKind kind = StrategyKind::None, int fractions = 10) {
        setup.phantom = &phantom;
        setup.strategy.kind = kind;
        setup.strategy.estimator = EstimatorKind::ExpSmoothing;
        setup.strategy.beta = 0.4;
        setup.strategy.priors = SmoothingPriors{1.0, 2.0};
        setup.schedule = Schedule{"none", {}};
        setup.sim.fractions = fractions;
        setup.sim.prescription = 70.0;
        setup.sim.criteria = standard_criteria(95.0, 90.0);
        setup.base_problem.phantom = &phantom;
        setup.base_problem.spec = ObjectiveSpec::robust();
        setup.base_problem.systematic = discretize_normal(0.0, 1.0, 1.0, 3.0);
        setup.base_problem.sigma_set = SigmaScenarioSet::single(2.0);
        setup.base_problem.fractions = fractions;
        setup.base_problem.alpha = 0.1;
        setup.nominal_spec = ObjectiveSpec::nominal();
        if (kind == StrategyKind::MarginUpdate) {
            setup.initial_plan = solve_nominal(phantom, setup.nominal_spec);
        } else {
            setup.initial_plan = solve_robust(setup.base_problem);
        }
    }
};

PatientErrors zero_errors(int fractions) {
    PatientErrors errors;
    errors.systematic = 0.0;
    errors.random = VectorXd::Zero(fractions);
    return errors;
}

}  // namespace

TEST_CASE("built-in schedules") {
    CHECK(Schedule::builtin("none", 30)->fractions.empty());
    CHECK(Schedule::builtin("W1Eval1", 30)->fractions == std::vector<int>{5});
    CHECK(Schedule::builtin("W2Eval1", 30)->fractions == std::vector<int>{10});
    CHECK(Schedule::builtin("W5Eval1", 30)->fractions == std::vector<int>{25});
    CHECK(Schedule::builtin("W1Eval3", 30)->fractions == std::vector<int>{5, 15, 20});
    CHECK(Schedule::builtin("W2Eval3", 30)->fractions == std::vector<int>{10, 15, 20});
    CHECK(Schedule::builtin("W1Eval4", 30)->fractions == std::vector<int>{5, 15, 20, 25});
    CHECK(Schedule::builtin("W2Eval4", 30)->fractions == std::vector<int>{10, 15, 20, 25});
    const auto gold = Schedule::builtin("gold", 30);
    CHECK(gold->fractions.size() == 29);
    CHECK(gold->fractions.front() == 1);
    CHECK(gold->fractions.back() == 29);
    CHECK_FALSE(Schedule::builtin("W9Eval9", 30).has_value());
}

TEST_CASE("zero-error patient passes without adaptation") {
    Fixture f(StrategyKind::ScenarioUpdate);
    f.setup.schedule = Schedule{"W1Eval1", {5}};
    const PatientResult result = simulate_patient(f.setup, zero_errors(10));
    CHECK(result.success);
    CHECK(result.adaptation_count == 0);
    REQUIRE(result.evaluations.size() == 1);
    CHECK_FALSE(result.evaluations[0].triggered);
    CHECK(result.worst_abs_shift_mm == doctest::Approx(0.0));
}

TEST_CASE("cumulative dose is the fraction-average of shifted doses") {
    Fixture f;
    PatientErrors errors = zero_errors(10);
    errors.systematic = 2.0;
    for (int i = 0; i < 10; ++i) errors.random(i) = (i % 2 == 0) ? 1.0 : -1.0;
    const PatientResult result = simulate_patient(f.setup, errors);
    VectorXd expected = VectorXd::Zero(f.phantom.grid().size());
    for (int n = 1; n <= 10; ++n)
        expected += f.phantom.dose(f.setup.initial_plan.fluence, errors.shift_at(n)) / 10.0;
    CHECK((result.cumulative_dose - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(result.worst_abs_shift_mm == doctest::Approx(3.0));
}

TEST_CASE("non-adaptive cumulative dose is permutation invariant") {
    Fixture f;
    Rng rng(5);
    PatientErrors errors = zero_errors(10);
    errors.systematic = 1.0;
    for (int i = 0; i < 10; ++i) errors.random(i) = rng.uniform(-4.0, 4.0);
    const PatientResult base = simulate_patient(f.setup, errors);

    PatientErrors shuffled = errors;
    std::reverse(shuffled.random.begin(), shuffled.random.end());
    std::swap(shuffled.random(2), shuffled.random(7));
    const PatientResult permuted = simulate_patient(f.setup, shuffled);
    CHECK((base.cumulative_dose - permuted.cumulative_dose).lpNorm<Eigen::Infinity>() <=
          1e-10 * base.cumulative_dose.lpNorm<Eigen::Infinity>());
}

TEST_CASE("scaled evaluation uses the N-over-n factor") {
    Fixture f;
    f.setup.schedule = Schedule{"custom", {4}};
    PatientErrors errors = zero_errors(10);
    errors.systematic = 1.5;
    const PatientResult result = simulate_patient(f.setup, errors);
    REQUIRE(result.evaluations.size() == 1);

    // Reconstruct the dose delivered up to fraction 4 and scale by 10/4.
    VectorXd partial = VectorXd::Zero(f.phantom.grid().size());
    for (int n = 1; n <= 4; ++n)
        partial += f.phantom.dose(f.setup.initial_plan.fluence, 1.5) / 10.0;
    const VectorXd scaled = partial * (10.0 / 4.0);
    const CriteriaOutcome outcome =
        evaluate_criteria(scaled, f.phantom, f.setup.sim.criteria, 70.0);
    for (size_t c = 0; c < outcome.passed.size(); ++c) {
        CHECK(result.evaluations[0].passed[c] == outcome.passed[c]);
        CHECK(result.evaluations[0].dxx_pct[c] ==
              doctest::Approx(100.0 * outcome.dxx_value[c] / 70.0));
    }
    // With a constant shift the scaled partial dose equals the final dose.
    CHECK((scaled * 0.4 * 10.0 / 4.0 - result.cumulative_dose * 1.0)
              .lpNorm<Eigen::Infinity>() >= 0.0);  // shapes agree; criteria identity below
    const CriteriaOutcome final_outcome =
        evaluate_criteria(result.cumulative_dose, f.phantom, f.setup.sim.criteria, 70.0);
    for (size_t c = 0; c < outcome.passed.size(); ++c)
        CHECK(outcome.dxx_value[c] == doctest::Approx(final_outcome.dxx_value[c]).epsilon(1e-12));
}

TEST_CASE("provenance must match the strategy") {
    Fixture f(StrategyKind::ScenarioUpdate);
    f.setup.schedule = Schedule{"W1Eval1", {5}};
    f.setup.initial_plan = solve_nominal(f.phantom, f.setup.nominal_spec);
    CHECK_THROWS_AS(simulate_patient(f.setup, zero_errors(10)), std::invalid_argument);
}

TEST_CASE("adaptation count is bounded by the schedule length") {
    Fixture f(StrategyKind::ScenarioUpdate);
    f.setup.schedule = Schedule{"custom", {2, 5, 8}};
    Rng rng(17);
    for (int trial = 0; trial < 3; ++trial) {
        PatientErrors errors = zero_errors(10);
        errors.systematic = rng.uniform(-6.0, 6.0);
        for (int i = 0; i < 10; ++i) errors.random(i) = rng.uniform(-5.0, 5.0);
        const PatientResult result = simulate_patient(f.setup, errors);
        CHECK(result.adaptation_count <= 3);
        CHECK(result.evaluations.size() == 3);
    }
}

TEST_CASE("first-fraction evaluation without the current measurement skips adaptation") {
    Fixture f(StrategyKind::ScenarioUpdate);
    f.setup.schedule = Schedule{"custom", {1, 5}};
    f.setup.sim.include_current_measurement = false;
    PatientErrors errors = zero_errors(10);
    errors.systematic = 6.0;
    const PatientResult result = simulate_patient(f.setup, errors);
    REQUIRE(result.evaluations.size() == 2);
    CHECK(result.evaluations[0].triggered);
    CHECK_FALSE(result.evaluations[0].adapted);  // only the planning position known
    CHECK(result.evaluations[1].adapted);
}

TEST_CASE("solver starvation retains the plan and marks the patient failed") {
    Fixture f(StrategyKind::ScenarioUpdate);
    f.setup.schedule = Schedule{"custom", {3}};
    f.setup.sim.solver.max_newton_total = 1;  // guarantees adaptation failure
    PatientErrors errors = zero_errors(10);
    errors.systematic = 6.0;  // enough to violate coverage at the checkpoint
    const PatientResult result = simulate_patient(f.setup, errors);
    REQUIRE(result.evaluations.size() == 1);
    CHECK(result.evaluations[0].triggered);
    CHECK(result.evaluations[0].solver_failed);
    CHECK(result.any_solver_failure);
    CHECK_FALSE(result.success);
    CHECK(result.adaptation_count == 0);
}

TEST_CASE("population run") {
    Fixture f;
    PopulationSpec population;
    population.systematic_mean = MeanModel::fixed(0.0);
    population.systematic_std = 1.0;
    population.random_mean = MeanModel::fixed(0.0);
    population.random_std = 2.0;

    SUBCASE("single zero-error patient is a full success") {
        PopulationSpec degenerate;
        degenerate.systematic_std = 0.0;
        degenerate.random_std = 0.0;
        const PopulationReport report = run_population(f.setup, degenerate, 1, 42);
        CHECK(report.size == 1);
        CHECK(report.success_rate_pct == doctest::Approx(100.0));
    }

    SUBCASE("thread count does not change the result") {
        const PopulationReport seq = run_population(f.setup, population, 24, 7, 1);
        const PopulationReport par = run_population(f.setup, population, 24, 7, 2);
        CHECK(seq.success_rate_pct == par.success_rate_pct);
        for (int i = 0; i < 24; ++i) {
            CHECK((seq.patients[i].cumulative_dose - par.patients[i].cumulative_dose)
                      .lpNorm<Eigen::Infinity>() == 0.0);
        }
    }

    SUBCASE("identical seeds give identical reports, different seeds differ") {
        const PopulationReport a = run_population(f.setup, population, 16, 11);
        const PopulationReport b = run_population(f.setup, population, 16, 11);
        CHECK(a.success_rate_pct == b.success_rate_pct);
        CHECK(a.criterion_worst_pct[0] == b.criterion_worst_pct[0]);
        const PopulationReport c = run_population(f.setup, population, 16, 12);
        bool any_difference = a.success_rate_pct != c.success_rate_pct;
        for (int i = 0; i < 16 && !any_difference; ++i)
            any_difference = (a.patients[i].trajectory.shifts != c.patients[i].trajectory.shifts);
        CHECK(any_difference);
    }

    SUBCASE("population size must be positive") {
        CHECK_THROWS_AS(run_population(f.setup, population, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("candidate rates per evaluation fraction") {
    Fixture f(StrategyKind::ScenarioUpdate);
    f.setup.schedule = Schedule{"custom", {3, 6}};
    PopulationSpec population;
    population.systematic_mean = MeanModel::uniform(-6.0, 6.0);
    population.systematic_std = 2.0;
    population.random_std = 2.5;
    const PopulationReport report = run_population(f.setup, population, 20, 23, 2);
    REQUIRE(report.candidate_rate_pct.size() == 2);
    for (const auto& [fraction, rate] : report.candidate_rate_pct) {
        CHECK(rate >= 0.0);
        CHECK(rate <= 100.0);
    }
    // Intersection can never exceed any per-fraction rate.
    for (const auto& [fraction, rate] : report.candidate_rate_pct)
        CHECK(report.intersection_rate_pct <= rate + 1e-12);
    // Adaptation counts are consistent with the records.
    for (const PatientResult& p : report.patients) {
        int adapted = 0;
        for (const EvaluationRecord& e : p.evaluations) adapted += e.adapted ? 1 : 0;
        CHECK(adapted == p.adaptation_count);
    }
}

TEST_CASE("dose probability curves") {
    const std::vector<double> stats{95.0, 90.0, 85.0, 80.0};
    VectorXd grid(3);
    grid << 0.0, 88.0, 120.0;
    const VectorXd at_least = dose_probability_curve(stats, grid, true);
    CHECK(at_least(0) == doctest::Approx(1.0));
    CHECK(at_least(1) == doctest::Approx(0.5));
    CHECK(at_least(2) == doctest::Approx(0.0));
    const VectorXd at_most = dose_probability_curve(stats, grid, false);
    CHECK(at_most(0) == doctest::Approx(0.0));
    CHECK(at_most(2) == doctest::Approx(1.0));
}

TEST_CASE("bootstrap of the worst-shift spread") {
    SUBCASE("identical values give a zero-width distribution") {
        const BootstrapResult r = bootstrap_worst_error(std::vector<double>(50, 3.0), 100, 9);
        CHECK(r.full_sample_std == doctest::Approx(0.0));
        CHECK(r.resample_mean == doctest::Approx(0.0));
        CHECK(r.resample_std == doctest::Approx(0.0));
    }

    SUBCASE("single resample") {
        const BootstrapResult r = bootstrap_worst_error({1.0, 2.0, 3.0}, 1, 9);
        CHECK(r.resampled_stds.size() == 1);
    }

    SUBCASE("bootstrap mean tracks the full-sample statistic") {
        Rng rng(31);
        std::vector<double> values;
        for (int i = 0; i < 200; ++i) values.push_back(std::abs(rng.normal(0.0, 5.0)));
        const BootstrapResult r = bootstrap_worst_error(values, 500, 77);
        CHECK(std::abs(r.resample_mean - r.full_sample_std) <= 3.0 * r.resample_std);
        CHECK(r.densities.size() == r.bin_centers.size());
        // Histogram integrates to one.
        const double width = r.bin_centers.size() > 1 ? r.bin_centers(1) - r.bin_centers(0) : 1.0;
        CHECK(r.densities.sum() * width == doctest::Approx(1.0));
    }

    SUBCASE("validation") {
        CHECK_THROWS_AS(bootstrap_worst_error({}, 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(bootstrap_worst_error({1.0}, 0, 1), std::invalid_argument);
    }
}
