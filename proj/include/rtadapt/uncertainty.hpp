#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace rtadapt {

using Eigen::VectorXd;

/// Discrete shift scenarios with probabilities, both aligned on the voxel
/// grid spacing. Probabilities are nonnegative and sum to 1.
struct DiscreteScenarioSet {
    VectorXd shifts;  // mm, strictly increasing
    VectorXd probs;

    int size() const { return static_cast<int>(shifts.size()); }
};

/// Scenarios for the random-error standard deviation (the sigma level the
/// per-fraction errors are conditioned on).
struct SigmaScenarioSet {
    VectorXd sigmas;  // mm, each >= 0
    VectorXd probs;

    int size() const { return static_cast<int>(sigmas.size()); }

    static SigmaScenarioSet single(double sigma);
    /// Symmetric three-point spread {(1-rel)s, s, (1+rel)s} with weights
    /// {0.25, 0.5, 0.25}.
    static SigmaScenarioSet three_point(double sigma, double relative_spread);
};

/// Cell-mass discretization of N(mean, std^2) onto multiples of `spacing`.
///
/// Scenario shifts are the grid multiples within mean +- half_width*std; each
/// carries the normal CDF mass of its half-open cell of width `spacing`, and
/// the set is renormalized to total probability 1. A zero std (or a window
/// containing no grid point) degenerates to the nearest grid point with
/// probability 1.
DiscreteScenarioSet discretize_normal(double mean, double std_dev, double spacing,
                                      double half_width = 3.0);

/// Standard normal CDF.
double normal_cdf(double z);

/// Per-patient mean that is either fixed or drawn uniformly from a range.
struct MeanModel {
    enum class Kind { Fixed, Uniform };
    Kind kind = Kind::Fixed;
    double value = 0.0;  // Fixed
    double lo = 0.0;     // Uniform
    double hi = 0.0;

    static MeanModel fixed(double v) { return {Kind::Fixed, v, 0.0, 0.0}; }
    static MeanModel uniform(double lo, double hi) { return {Kind::Uniform, 0.0, lo, hi}; }

    bool operator==(const MeanModel&) const = default;
};

class Rng;

/// Error statistics of a simulated patient population. Each patient carries
/// one systematic shift for the whole treatment plus i.i.d. per-fraction
/// random shifts.
struct PopulationSpec {
    MeanModel systematic_mean = MeanModel::fixed(0.0);
    double systematic_std = 2.5;  // mm
    MeanModel random_mean = MeanModel::fixed(0.0);
    double random_std = 6.5;  // mm

    /// Errors of the same order as the a-priori model: systematic N(0, 2.5^2),
    /// random N(0, 6.5^2).
    static PopulationSpec small_error();
    /// Unpredictably large errors: per-patient means U[-3, 3] mm, systematic
    /// std 3.5 mm, random std 7.5 mm.
    static PopulationSpec large_error();
};

struct PatientErrors {
    double systematic = 0.0;    // mm, constant over the treatment
    VectorXd random;            // mm, one entry per fraction

    /// Measured isocenter shift at fraction n (1-based): systematic + random.
    double shift_at(int fraction) const { return systematic + random(fraction - 1); }
};

/// Draws one patient's errors; deterministic for a fixed seed.
PatientErrors sample_patient(const PopulationSpec& spec, int fractions, std::uint64_t seed);

/// Measured isocenter shifts; entry 0 is the planning-CT position (0 by
/// convention), entries 1..n are the shifts of the delivered fractions.
struct TrajectoryLog {
    std::vector<double> shifts;

    TrajectoryLog() : shifts{0.0} {}
    explicit TrajectoryLog(std::vector<double> s) : shifts(std::move(s)) {}

    int size() const { return static_cast<int>(shifts.size()); }
    void record(double shift) { shifts.push_back(shift); }
};

struct ErrorEstimate {
    double systematic_mean = 0.0;  // mm
    double systematic_std = 0.0;   // mm
    double random_mean = 0.0;      // mm
    double random_std = 0.0;       // mm
};

/// Sample statistics over the whole log: systematic mean/std are the plain
/// mean and population std of the shifts; the random components are the mean
/// and population std of the absolute deviations from the systematic mean.
ErrorEstimate estimate_arithmetic(const TrajectoryLog& log);

/// Seeds for the exponential-smoothing recursions: the forecast starts at the
/// planning position, the MAD levels at prior_std / 1.25.
struct SmoothingPriors {
    double systematic_std = 2.5;  // mm
    double random_std = 6.5;      // mm

    bool operator==(const SmoothingPriors&) const = default;
};

/// Exponential smoothing with parameter beta: the forecast r is updated as
/// r <- beta*measurement + (1-beta)*r, the spread via the smoothed mean
/// absolute deviation and std ~= 1.25*MAD. The random components smooth the
/// absolute deviations from the final forecast the same way.
ErrorEstimate estimate_exp_smoothing(const TrajectoryLog& log, double beta,
                                     const SmoothingPriors& priors = {});

}  // namespace rtadapt
