#include "rtadapt/uncertainty.hpp"

#include "rtadapt/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace rtadapt {

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

SigmaScenarioSet SigmaScenarioSet::single(double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("sigma scenario must be nonnegative");
    SigmaScenarioSet set;
    set.sigmas = VectorXd::Constant(1, sigma);
    set.probs = VectorXd::Constant(1, 1.0);
    return set;
}

SigmaScenarioSet SigmaScenarioSet::three_point(double sigma, double relative_spread) {
    if (sigma < 0.0 || relative_spread < 0.0 || relative_spread >= 1.0)
        throw std::invalid_argument("invalid three-point sigma spread");
    SigmaScenarioSet set;
    set.sigmas = VectorXd(3);
    set.sigmas << sigma * (1.0 - relative_spread), sigma, sigma * (1.0 + relative_spread);
    set.probs = VectorXd(3);
    set.probs << 0.25, 0.5, 0.25;
    return set;
}

DiscreteScenarioSet discretize_normal(double mean, double std_dev, double spacing,
                                      double half_width) {
    if (std_dev < 0.0) throw std::invalid_argument("std must be nonnegative");
    if (spacing <= 0.0) throw std::invalid_argument("spacing must be positive");

    auto degenerate = [&] {
        DiscreteScenarioSet set;
        set.shifts = VectorXd::Constant(1, std::round(mean / spacing) * spacing);
        set.probs = VectorXd::Constant(1, 1.0);
        return set;
    };
    if (std_dev == 0.0) return degenerate();

    const long k_lo = static_cast<long>(std::ceil((mean - half_width * std_dev) / spacing - 1e-12));
    const long k_hi = static_cast<long>(std::floor((mean + half_width * std_dev) / spacing + 1e-12));
    if (k_lo > k_hi) return degenerate();

    const long count = k_hi - k_lo + 1;
    DiscreteScenarioSet set;
    set.shifts = VectorXd(count);
    set.probs = VectorXd(count);
    for (long i = 0; i < count; ++i) {
        const double shift = static_cast<double>(k_lo + i) * spacing;
        const double z_lo = (shift - 0.5 * spacing - mean) / std_dev;
        const double z_hi = (shift + 0.5 * spacing - mean) / std_dev;
        set.shifts(i) = shift;
        set.probs(i) = normal_cdf(z_hi) - normal_cdf(z_lo);
    }
    const double total = set.probs.sum();
    if (total <= 0.0) return degenerate();
    set.probs /= total;
    return set;
}

namespace {

double sample_mean(const MeanModel& model, Rng& rng) {
    switch (model.kind) {
        case MeanModel::Kind::Fixed: return model.value;
        case MeanModel::Kind::Uniform: return rng.uniform(model.lo, model.hi);
    }
    return 0.0;
}

}  // namespace

PopulationSpec PopulationSpec::small_error() {
    PopulationSpec spec;
    spec.systematic_mean = MeanModel::fixed(0.0);
    spec.systematic_std = 2.5;
    spec.random_mean = MeanModel::fixed(0.0);
    spec.random_std = 6.5;
    return spec;
}

PopulationSpec PopulationSpec::large_error() {
    PopulationSpec spec;
    spec.systematic_mean = MeanModel::uniform(-3.0, 3.0);
    spec.systematic_std = 3.5;
    spec.random_mean = MeanModel::uniform(-3.0, 3.0);
    spec.random_std = 7.5;
    return spec;
}

PatientErrors sample_patient(const PopulationSpec& spec, int fractions, std::uint64_t seed) {
    if (fractions < 1) throw std::invalid_argument("fractions must be >= 1");
    Rng rng(seed);
    PatientErrors errors;
    const double sys_mean = sample_mean(spec.systematic_mean, rng);
    errors.systematic = rng.normal(sys_mean, spec.systematic_std);
    const double rand_mean = sample_mean(spec.random_mean, rng);
    errors.random = VectorXd(fractions);
    for (int i = 0; i < fractions; ++i) errors.random(i) = rng.normal(rand_mean, spec.random_std);
    return errors;
}

ErrorEstimate estimate_arithmetic(const TrajectoryLog& log) {
    const int m = log.size();
    if (m < 2) throw std::invalid_argument("estimator needs at least two measurements");

    double mean = 0.0;
    for (double r : log.shifts) mean += r;
    mean /= m;

    double var = 0.0;
    for (double r : log.shifts) var += (r - mean) * (r - mean);
    var /= m;

    double dev_mean = 0.0;
    for (double r : log.shifts) dev_mean += std::abs(r - mean);
    dev_mean /= m;

    double dev_var = 0.0;
    for (double r : log.shifts) {
        const double d = std::abs(r - mean) - dev_mean;
        dev_var += d * d;
    }
    dev_var /= m;

    return ErrorEstimate{mean, std::sqrt(var), dev_mean, std::sqrt(dev_var)};
}

ErrorEstimate estimate_exp_smoothing(const TrajectoryLog& log, double beta,
                                     const SmoothingPriors& priors) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must lie in [0, 1]");
    const int m = log.size();
    if (m < 2) throw std::invalid_argument("estimator needs at least two measurements");

    // Forecast recursion; seeded with the planning position.
    double forecast = log.shifts[0];
    double mad = priors.systematic_std / 1.25;
    for (int mu = 1; mu < m; ++mu) {
        mad = beta * std::abs(log.shifts[mu] - forecast) + (1.0 - beta) * mad;
        forecast = beta * log.shifts[mu] + (1.0 - beta) * forecast;
    }

    // Absolute deviations from the final forecast, smoothed the same way.
    auto dev = [&](int mu) { return std::abs(log.shifts[mu] - forecast); };
    double dev_forecast = dev(0);
    double dev_mad = priors.random_std / 1.25;
    for (int mu = 1; mu < m; ++mu) {
        dev_mad = beta * std::abs(dev(mu) - dev_forecast) + (1.0 - beta) * dev_mad;
        dev_forecast = beta * dev(mu) + (1.0 - beta) * dev_forecast;
    }

    return ErrorEstimate{forecast, 1.25 * mad, dev_forecast, 1.25 * dev_mad};
}

}  // namespace rtadapt
