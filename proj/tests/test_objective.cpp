#include "rtadapt/objective.hpp"
#include "rtadapt/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace rtadapt;

namespace {

Phantom default_phantom() { return Phantom::build(PhantomConfig{}); }

VectorXd random_fluence(Rng& rng, int n, double scale = 10.0) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = rng.uniform(0.0, scale);
    return x;
}

// Monte-Carlo estimate of the expected fraction-averaged objective:
// draws per-fraction shifts from the discrete set, accumulates the mean dose
// of each sampled treatment and evaluates the plain objective on it.
struct McEstimate {
    double mean;
    double standard_error;
};

McEstimate mc_expected_objective(const Phantom& phantom, const ObjectiveSpec& spec,
                                 const VectorXd& x, double systematic,
                                 const DiscreteScenarioSet& set, int fractions, int samples,
                                 std::uint64_t seed) {
    std::vector<VectorXd> scenario_dose(set.size());
    for (int k = 0; k < set.size(); ++k)
        scenario_dose[k] = phantom.dose_matrix(systematic + set.shifts(k)) * x;

    std::vector<double> cumulative(set.size());
    double acc = 0.0;
    for (int k = 0; k < set.size(); ++k) {
        acc += set.probs(k);
        cumulative[k] = acc;
    }

    Rng rng(seed);
    double sum = 0.0;
    double sum_sq = 0.0;
    VectorXd dose(phantom.grid().size());
    for (int s = 0; s < samples; ++s) {
        dose.setZero();
        for (int i = 0; i < fractions; ++i) {
            const double u = rng.uniform01();
            int k = 0;
            while (k + 1 < set.size() && cumulative[k] < u) ++k;
            dose += scenario_dose[k];
        }
        dose /= static_cast<double>(fractions);
        const double f = total_objective(dose, phantom, spec);
        sum += f;
        sum_sq += f * f;
    }
    const double mean = sum / samples;
    const double var = std::max(0.0, sum_sq / samples - mean * mean);
    return {mean, std::sqrt(var / samples)};
}

}  // namespace

TEST_CASE("quadratic penalty") {
    VectorXd weights(3);
    weights << 0.25, 0.5, 0.25;
    SUBCASE("exact prescription gives zero") {
        CHECK(penalty(VectorXd::Constant(3, 70.0), weights, 70.0) == doctest::Approx(0.0));
    }
    SUBCASE("uniform one-unit excess gives one") {
        CHECK(penalty(VectorXd::Constant(3, 71.0), weights, 70.0) == doctest::Approx(1.0));
    }
    SUBCASE("two-voxel example") {
        VectorXd w(2), d(2);
        w << 0.5, 0.5;
        d << 70.0, 72.0;
        CHECK(penalty(d, w, 70.0) == doctest::Approx(2.0));
    }
}

TEST_CASE("total objective") {
    const Phantom phantom = default_phantom();

    SUBCASE("all-zero weights give zero") {
        ObjectiveSpec spec = ObjectiveSpec::nominal();
        spec.target_weight = spec.left_oar_weight = spec.right_oar_weight = spec.external_weight = 0.0;
        CHECK(total_objective(VectorXd::Constant(101, 33.0), phantom, spec) == doctest::Approx(0.0));
    }

    SUBCASE("single ROI scales linearly in its weight") {
        ObjectiveSpec spec = ObjectiveSpec::nominal();
        spec.left_oar_weight = spec.right_oar_weight = spec.external_weight = 0.0;
        spec.target_weight = 2.0;
        const VectorXd dose = VectorXd::Constant(101, 35.0);
        const double direct = penalty(dose, phantom.roi_weights(RoiName::Ptv), 70.0);
        CHECK(total_objective(dose, phantom, spec) == doctest::Approx(2.0 * direct));
    }

    SUBCASE("prescription-uniform target leaves only the off-target terms") {
        ObjectiveSpec spec = ObjectiveSpec::nominal();
        // Dose equal to the prescription on every voxel with PTV volume,
        // zero elsewhere.
        VectorXd dose = VectorXd::Zero(101);
        const VectorXd& ptv_w = phantom.roi_weights(RoiName::Ptv);
        for (int v = 0; v < 101; ++v)
            if (ptv_w(v) > 0.0) dose(v) = 70.0;
        double expected = 0.0;
        for (RoiName roi : {RoiName::LeftOar, RoiName::RightOar, RoiName::External}) {
            const VectorXd& w = phantom.roi_weights(roi);
            for (int v = 0; v < 101; ++v) expected += spec.weight(roi) * w(v) * dose(v) * dose(v);
        }
        CHECK(total_objective(dose, phantom, spec) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("expected fraction objective") {
    const Phantom phantom = default_phantom();
    const ObjectiveSpec spec = ObjectiveSpec::robust();
    const ExpectedObjective objective(phantom, spec);
    Rng rng(5);

    SUBCASE("zero sigma reduces to the plain shifted objective") {
        const VectorXd x = random_fluence(rng, 101);
        const double expected = total_objective(phantom.dose(x, 3.0), phantom, spec);
        CHECK(expected_fraction_objective(objective, x, 3.0, 0.0, 30) ==
              doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("variance contribution vanishes as fractions grow") {
        const VectorXd x = random_fluence(rng, 101);
        const DiscreteScenarioSet set = discretize_normal(0.0, 4.0, 1.0, 3.0);
        VectorXd blurred = VectorXd::Zero(101);
        for (int k = 0; k < set.size(); ++k)
            blurred += set.probs(k) * (phantom.dose_matrix(2.0 + set.shifts(k)) * x);
        const double limit = total_objective(blurred, phantom, spec);
        const double huge_n = objective.value(x, 2.0, set, 1000000000);
        CHECK(huge_n == doctest::Approx(limit).epsilon(1e-6));
        // The variance term is nonnegative: finite N lies above the limit.
        CHECK(objective.value(x, 2.0, set, 30) >= limit - 1e-12);
    }

    SUBCASE("agrees with Monte-Carlo sampling of 30-fraction treatments") {
        const VectorXd x = random_fluence(rng, 101);
        const DiscreteScenarioSet set = discretize_normal(0.0, 6.5, 1.0, 3.0);
        const double analytic = objective.value(x, 1.0, set, 30);
        const McEstimate mc =
            mc_expected_objective(phantom, spec, x, 1.0, set, 30, 20000, 1234);
        CHECK(std::abs(analytic - mc.mean) <= 3.0 * mc.standard_error);
    }

    SUBCASE("quadratic form reproduces the scenario-dose evaluation") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 5.0, 1.0, 3.0);
        const QuadraticForm form = objective.fraction_quadratic(-2.5, set, 30);
        for (int trial = 0; trial < 5; ++trial) {
            const VectorXd x = random_fluence(rng, 101);
            CHECK(form.value(x) ==
                  doctest::Approx(objective.value(x, -2.5, set, 30)).epsilon(1e-9));
        }
    }

    SUBCASE("grid batch assembly matches the dense path") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 6.5, 1.0, 3.0);
        const std::vector<long> steps{-7, -3, 0, 2, 5};
        const auto batch = objective.fraction_quadratics_grid(steps, set, 30);
        REQUIRE(batch.size() == steps.size());
        for (size_t i = 0; i < steps.size(); ++i) {
            const QuadraticForm dense =
                objective.fraction_quadratic(static_cast<double>(steps[i]), set, 30);
            CHECK((batch[i].Q - dense.Q).lpNorm<Eigen::Infinity>() <=
                  1e-10 * dense.Q.lpNorm<Eigen::Infinity>());
            CHECK((batch[i].g - dense.g).lpNorm<Eigen::Infinity>() <=
                  1e-10 * (1.0 + dense.g.lpNorm<Eigen::Infinity>()));
            CHECK(batch[i].c == doctest::Approx(dense.c).epsilon(1e-12));
        }
    }

    SUBCASE("Jensen direction: expectation dominates the objective of the mean dose") {
        for (int trial = 0; trial < 10; ++trial) {
            const VectorXd x = random_fluence(rng, 101);
            const double sigma = rng.uniform(1.0, 8.0);
            const double shift = rng.uniform(-5.0, 5.0);
            const DiscreteScenarioSet set = discretize_normal(0.0, sigma, 1.0, 3.0);
            VectorXd mean_dose = VectorXd::Zero(101);
            for (int k = 0; k < set.size(); ++k)
                mean_dose += set.probs(k) * (phantom.dose_matrix(shift + set.shifts(k)) * x);
            CHECK(objective.value(x, shift, set, 30) >=
                  total_objective(mean_dose, phantom, spec) - 1e-9);
        }
    }

    SUBCASE("midpoint convexity in the fluence") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 6.5, 1.0, 3.0);
        for (int trial = 0; trial < 10; ++trial) {
            const VectorXd x = random_fluence(rng, 101);
            const VectorXd y = random_fluence(rng, 101);
            const double fx = objective.value(x, 1.0, set, 30);
            const double fy = objective.value(y, 1.0, set, 30);
            const double fm = objective.value((x + y) / 2.0, 1.0, set, 30);
            CHECK(fm <= 0.5 * fx + 0.5 * fy + 1e-9 * (1.0 + std::abs(fx) + std::abs(fy)));
        }
    }

    SUBCASE("gradient matches central finite differences") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 5.0, 1.0, 3.0);
        const QuadraticForm form = objective.fraction_quadratic(1.0, set, 30);
        const VectorXd x = random_fluence(rng, 101);
        const VectorXd grad = form.gradient(x);
        const double step = 1e-5;
        for (int i = 0; i < 101; i += 17) {
            VectorXd xp = x, xm = x;
            xp(i) += step;
            xm(i) -= step;
            const double fd = (form.value(xp) - form.value(xm)) / (2.0 * step);
            CHECK(grad(i) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("dose-volume metric dxx") {
    SUBCASE("uniform dose") {
        const VectorXd w = VectorXd::Constant(4, 0.25);
        CHECK(dxx(VectorXd::Constant(4, 70.0), w, 99.0) == doctest::Approx(70.0));
    }

    SUBCASE("two-voxel quantiles") {
        VectorXd w(2), d(2);
        w << 0.5, 0.5;
        d << 10.0, 20.0;
        CHECK(dxx(d, w, 30.0) == doctest::Approx(20.0));
        CHECK(dxx(d, w, 99.0) == doctest::Approx(10.0));
        CHECK(dxx(d, w, 50.0) == doctest::Approx(20.0));
    }

    SUBCASE("monotone nonincreasing in the volume fraction") {
        Rng rng(9);
        VectorXd w(8), d(8);
        double sum = 0.0;
        for (int i = 0; i < 8; ++i) {
            w(i) = rng.uniform(0.1, 1.0);
            d(i) = rng.uniform(0.0, 80.0);
            sum += w(i);
        }
        w /= sum;
        double previous = std::numeric_limits<double>::infinity();
        for (double x = 5.0; x <= 100.0; x += 5.0) {
            const double value = dxx(d, w, x);
            CHECK(value <= previous + 1e-12);
            previous = value;
        }
    }

    SUBCASE("empty ROI and bad fractions are rejected") {
        CHECK_THROWS_AS(dxx(VectorXd::Ones(3), VectorXd::Zero(3), 50.0), std::invalid_argument);
        CHECK_THROWS_AS(dxx(VectorXd::Ones(3), VectorXd::Ones(3), 0.0), std::invalid_argument);
        CHECK_THROWS_AS(dxx(VectorXd::Ones(3), VectorXd::Ones(3), 101.0), std::invalid_argument);
    }
}

TEST_CASE("quality criteria evaluation") {
    const Phantom phantom = default_phantom();
    const std::vector<QualityCriterion> criteria = standard_criteria(35.0, 45.0);

    SUBCASE("prescription-uniform CTV dose with cold OARs passes everything") {
        VectorXd dose = VectorXd::Zero(101);
        for (int v = 0; v < 101; ++v)
            if (phantom.roi_weights(RoiName::Ctv)(v) > 0.0) dose(v) = 70.0;
        const CriteriaOutcome outcome = evaluate_criteria(dose, phantom, criteria, 70.0);
        CHECK(outcome.all_passed());
        CHECK_FALSE(outcome.coverage_violated(criteria));
        CHECK_FALSE(outcome.sparing_violated(criteria));
    }

    SUBCASE("coverage at 89 percent fails the 90 percent floor") {
        VectorXd dose = VectorXd::Zero(101);
        for (int v = 0; v < 101; ++v)
            if (phantom.roi_weights(RoiName::Ctv)(v) > 0.0) dose(v) = 0.89 * 70.0;
        const CriteriaOutcome outcome = evaluate_criteria(dose, phantom, criteria, 70.0);
        CHECK_FALSE(outcome.passed[0]);
        CHECK(outcome.coverage_violated(criteria));
    }

    SUBCASE("criterion labels") {
        CHECK(criteria[0].label() == "ctv_d99");
        CHECK(criteria[1].label() == "right_oar_d30");
        CHECK(criteria[2].label() == "left_oar_d20");
    }
}
