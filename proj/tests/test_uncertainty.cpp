#include "rtadapt/uncertainty.hpp"
#include "rtadapt/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace rtadapt;

namespace {

// Quadrature oracle for normal cell masses, independent of the CDF path used
// by the implementation: composite Simpson on the density.
double simpson_normal_mass(double lo, double hi, double mean, double std_dev) {
    const int n = 4000;  // even
    const double h = (hi - lo) / n;
    auto pdf = [&](double x) {
        const double z = (x - mean) / std_dev;
        return std::exp(-0.5 * z * z) / (std_dev * std::sqrt(2.0 * M_PI));
    };
    double sum = pdf(lo) + pdf(hi);
    for (int i = 1; i < n; ++i) sum += pdf(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

}  // namespace

TEST_CASE("discretize_normal") {
    SUBCASE("degenerate distribution collapses to one scenario") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 0.0, 1.0, 3.0);
        REQUIRE(set.size() == 1);
        CHECK(set.shifts(0) == doctest::Approx(0.0));
        CHECK(set.probs(0) == doctest::Approx(1.0));
    }

    SUBCASE("window without a grid point snaps to the nearest one") {
        const DiscreteScenarioSet set = discretize_normal(0.4, 0.05, 1.0, 3.0);
        REQUIRE(set.size() == 1);
        CHECK(set.shifts(0) == doctest::Approx(0.0));
        CHECK(set.probs(0) == doctest::Approx(1.0));
    }

    SUBCASE("symmetric distribution gives symmetric probabilities summing to one") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 2.5, 1.0, 3.0);
        REQUIRE(set.size() == 15);  // grid points in [-7.5, 7.5]
        CHECK(std::abs(set.probs.sum() - 1.0) <= 1e-12);
        for (int k = 0; k < set.size(); ++k) {
            CHECK(set.probs(k) == doctest::Approx(set.probs(set.size() - 1 - k)).epsilon(1e-12));
            CHECK(set.shifts(k) == doctest::Approx(-set.shifts(set.size() - 1 - k)));
        }
    }

    SUBCASE("center cell mass matches the quadrature oracle") {
        const DiscreteScenarioSet set = discretize_normal(0.0, 2.5, 1.0, 3.0);
        const int center = 7;
        REQUIRE(set.shifts(center) == doctest::Approx(0.0));
        const double cell = simpson_normal_mass(-0.5, 0.5, 0.0, 2.5);
        const double window = simpson_normal_mass(-7.5, 7.5, 0.0, 2.5);
        CHECK(set.probs(center) == doctest::Approx(cell / window).epsilon(1e-9));
        // Renormalization is a sub-percent effect at a three-sigma window.
        CHECK(set.probs(center) == doctest::Approx(cell).epsilon(3e-3));
    }

    SUBCASE("discrete mean stays within half a cell of the requested mean") {
        Rng rng(3);
        for (int i = 0; i < 100; ++i) {
            const double mean = rng.uniform(-10.0, 10.0);
            const double std_dev = rng.uniform(0.2, 8.0);
            const DiscreteScenarioSet set = discretize_normal(mean, std_dev, 1.0, 3.0);
            CHECK(std::abs(set.probs.sum() - 1.0) <= 1e-12);
            const double discrete_mean = set.shifts.dot(set.probs);
            CHECK(std::abs(discrete_mean - mean) <= 0.5 + 1e-9);
        }
    }

    SUBCASE("preconditions") {
        CHECK_THROWS_AS(discretize_normal(0.0, -1.0, 1.0, 3.0), std::invalid_argument);
        CHECK_THROWS_AS(discretize_normal(0.0, 1.0, 0.0, 3.0), std::invalid_argument);
    }
}

TEST_CASE("patient sampling") {
    SUBCASE("deterministic under a fixed seed") {
        const PopulationSpec spec = PopulationSpec::large_error();
        const PatientErrors a = sample_patient(spec, 30, 99);
        const PatientErrors b = sample_patient(spec, 30, 99);
        CHECK(a.systematic == b.systematic);
        CHECK((a.random - b.random).lpNorm<Eigen::Infinity>() == 0.0);
        const PatientErrors c = sample_patient(spec, 30, 100);
        CHECK(a.systematic != c.systematic);
    }

    SUBCASE("zero spread means zero shifts") {
        PopulationSpec spec;
        spec.systematic_std = 0.0;
        spec.random_std = 0.0;
        const PatientErrors errors = sample_patient(spec, 10, 1);
        CHECK(errors.systematic == doctest::Approx(0.0));
        CHECK(errors.random.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
        CHECK(errors.shift_at(3) == doctest::Approx(0.0));
    }

    SUBCASE("small population statistics land near the model parameters") {
        const PopulationSpec spec = PopulationSpec::small_error();
        const int n = 4000;
        double sys_sum = 0.0, sys_sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const PatientErrors e = sample_patient(spec, 1, 1000 + i);
            sys_sum += e.systematic;
            sys_sq += e.systematic * e.systematic;
        }
        const double mean = sys_sum / n;
        const double std_dev = std::sqrt(sys_sq / n - mean * mean);
        CHECK(std::abs(mean) <= 3.0 * 2.5 / std::sqrt(n));
        CHECK(std_dev == doctest::Approx(2.5).epsilon(0.05));
    }

    SUBCASE("large population systematic means stay inside the uniform range") {
        // Large systematic errors combine a U[-3,3] mean with a 3.5 mm spread;
        // check the aggregate std is near sqrt(3 + 3.5^2).
        const PopulationSpec spec = PopulationSpec::large_error();
        const int n = 4000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const PatientErrors e = sample_patient(spec, 1, 77000 + i);
            sum += e.systematic;
            sq += e.systematic * e.systematic;
        }
        const double mean = sum / n;
        const double std_dev = std::sqrt(sq / n - mean * mean);
        CHECK(std::abs(mean) <= 0.3);
        CHECK(std_dev == doctest::Approx(std::sqrt(3.0 + 3.5 * 3.5)).epsilon(0.08));
    }

    SUBCASE("fraction count must be positive") {
        CHECK_THROWS_AS(sample_patient(PopulationSpec::small_error(), 0, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("arithmetic estimator") {
    SUBCASE("hand-computed example") {
        const TrajectoryLog log({0.0, 2.0, 4.0});
        const ErrorEstimate est = estimate_arithmetic(log);
        CHECK(est.systematic_mean == doctest::Approx(2.0));
        CHECK(est.systematic_std == doctest::Approx(std::sqrt(8.0 / 3.0)));
        // absolute deviations {2, 0, 2}
        CHECK(est.random_mean == doctest::Approx(4.0 / 3.0));
        CHECK(est.random_std == doctest::Approx(std::sqrt(8.0 / 9.0)));
    }

    SUBCASE("all-zero log") {
        const ErrorEstimate est = estimate_arithmetic(TrajectoryLog({0.0, 0.0, 0.0}));
        CHECK(est.systematic_mean == doctest::Approx(0.0));
        CHECK(est.systematic_std == doctest::Approx(0.0));
        CHECK(est.random_mean == doctest::Approx(0.0));
        CHECK(est.random_std == doctest::Approx(0.0));
    }

    SUBCASE("matches a direct-summation oracle on random logs") {
        Rng rng(21);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> shifts{0.0};
            const int m = 2 + static_cast<int>(rng.index(20));
            for (int i = 1; i < m; ++i) shifts.push_back(rng.uniform(-10.0, 10.0));
            const ErrorEstimate est = estimate_arithmetic(TrajectoryLog(shifts));

            double mean = 0.0;
            for (double s : shifts) mean += s;
            mean /= m;
            double var = 0.0, dev_mean = 0.0;
            for (double s : shifts) var += (s - mean) * (s - mean);
            for (double s : shifts) dev_mean += std::abs(s - mean);
            var /= m;
            dev_mean /= m;
            double dev_var = 0.0;
            for (double s : shifts) {
                const double d = std::abs(s - mean) - dev_mean;
                dev_var += d * d;
            }
            dev_var /= m;

            CHECK(est.systematic_mean == doctest::Approx(mean).epsilon(1e-12));
            CHECK(est.systematic_std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
            CHECK(est.random_mean == doctest::Approx(dev_mean).epsilon(1e-12));
            CHECK(est.random_std == doctest::Approx(std::sqrt(dev_var)).epsilon(1e-12));
        }
    }

    SUBCASE("order does not matter") {
        const ErrorEstimate a = estimate_arithmetic(TrajectoryLog({0.0, 3.0, -1.0, 5.0}));
        const ErrorEstimate b = estimate_arithmetic(TrajectoryLog({0.0, 5.0, 3.0, -1.0}));
        CHECK(a.systematic_mean == doctest::Approx(b.systematic_mean));
        CHECK(a.systematic_std == doctest::Approx(b.systematic_std));
    }

    SUBCASE("too short logs are rejected") {
        CHECK_THROWS_AS(estimate_arithmetic(TrajectoryLog({0.0})), std::invalid_argument);
    }
}

TEST_CASE("exponential smoothing estimator") {
    const SmoothingPriors priors{2.5, 6.5};

    SUBCASE("beta = 1 tracks the latest measurement") {
        const ErrorEstimate est = estimate_exp_smoothing(TrajectoryLog({0.0, 5.0}), 1.0, priors);
        CHECK(est.systematic_mean == doctest::Approx(5.0));
    }

    SUBCASE("beta = 0 stays at the seed") {
        const ErrorEstimate est =
            estimate_exp_smoothing(TrajectoryLog({0.0, 5.0, -3.0, 8.0}), 0.0, priors);
        CHECK(est.systematic_mean == doctest::Approx(0.0));
        CHECK(est.systematic_std == doctest::Approx(2.5));
    }

    SUBCASE("one smoothing update: 0.4*5 + 0.6*2 = 3.2") {
        // log {0, 5, 5} at beta 0.4: forecast goes 0 -> 2 -> 3.2.
        const ErrorEstimate est =
            estimate_exp_smoothing(TrajectoryLog({0.0, 5.0, 5.0}), 0.4, priors);
        CHECK(est.systematic_mean == doctest::Approx(3.2));
    }

    SUBCASE("MAD recursion with the documented seed") {
        // log {0, 5} at beta 0.4: MAD_1 = 2.5/1.25 = 2, then 0.4*|5-0| + 0.6*2 = 3.2.
        const ErrorEstimate est = estimate_exp_smoothing(TrajectoryLog({0.0, 5.0}), 0.4, priors);
        CHECK(est.systematic_std == doctest::Approx(1.25 * 3.2));
    }

    SUBCASE("beta = 1/M does not reproduce the arithmetic mean") {
        const TrajectoryLog log({0.0, 2.0, 4.0});
        const ErrorEstimate smoothed = estimate_exp_smoothing(log, 1.0 / 3.0, priors);
        const ErrorEstimate arithmetic = estimate_arithmetic(log);
        CHECK(smoothed.systematic_mean != doctest::Approx(arithmetic.systematic_mean));
    }

    SUBCASE("order matters") {
        const ErrorEstimate a =
            estimate_exp_smoothing(TrajectoryLog({0.0, 3.0, -1.0, 5.0}), 0.4, priors);
        const ErrorEstimate b =
            estimate_exp_smoothing(TrajectoryLog({0.0, 5.0, 3.0, -1.0}), 0.4, priors);
        CHECK(a.systematic_mean != doctest::Approx(b.systematic_mean));
    }

    SUBCASE("invalid beta is rejected") {
        CHECK_THROWS_AS(estimate_exp_smoothing(TrajectoryLog({0.0, 1.0}), -0.1, priors),
                        std::invalid_argument);
        CHECK_THROWS_AS(estimate_exp_smoothing(TrajectoryLog({0.0, 1.0}), 1.1, priors),
                        std::invalid_argument);
    }
}

TEST_CASE("sigma scenario sets") {
    const SigmaScenarioSet single = SigmaScenarioSet::single(6.5);
    CHECK(single.size() == 1);
    CHECK(single.probs(0) == doctest::Approx(1.0));

    const SigmaScenarioSet spread = SigmaScenarioSet::three_point(6.5, 0.25);
    CHECK(spread.size() == 3);
    CHECK(spread.sigmas(0) == doctest::Approx(6.5 * 0.75));
    CHECK(spread.sigmas(2) == doctest::Approx(6.5 * 1.25));
    CHECK(spread.probs.sum() == doctest::Approx(1.0));
}
