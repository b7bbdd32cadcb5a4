#pragma once

#include "rtadapt/phantom.hpp"
#include "rtadapt/uncertainty.hpp"

#include <array>
#include <string>
#include <vector>

namespace rtadapt {

/// Weighted-sum objective over the ROIs: the target aims at the prescription
/// dose, everything else at zero. The target is the PTV for nominal planning
/// and the CTV for robust planning.
struct ObjectiveSpec {
    RoiName target = RoiName::Ptv;
    double prescription = 70.0;
    double target_weight = 1.0;
    // Benchmark-tuned defaults; nominal() and robust() fill the weight sets
    // appropriate for each planning mode.
    double left_oar_weight = 0.003;
    double right_oar_weight = 0.001;
    double external_weight = 0.001;

    std::array<RoiName, 4> rois() const { return {target, RoiName::LeftOar, RoiName::RightOar, RoiName::External}; }
    double weight(RoiName roi) const;
    double prescribed_dose(RoiName roi) const { return roi == target ? prescription : 0.0; }

    static ObjectiveSpec nominal(double prescription = 70.0);
    static ObjectiveSpec robust(double prescription = 70.0);
};

/// Volume-weighted quadratic deviation from the prescribed dose:
/// sum_v w_v (d_v - dhat)^2 with the ROI's relative-volume weights w.
double penalty(const Eigen::Ref<const VectorXd>& dose, const Eigen::Ref<const VectorXd>& roi_weights,
               double prescribed);

/// Weighted sum of the per-ROI penalties.
double total_objective(const Eigen::Ref<const VectorXd>& dose, const Phantom& phantom,
                       const ObjectiveSpec& spec);

/// Convex quadratic x^T Q x - 2 g^T x + c.
struct QuadraticForm {
    MatrixXd Q;
    VectorXd g;
    double c = 0.0;

    double value(const Eigen::Ref<const VectorXd>& x) const {
        return x.dot(Q * x) - 2.0 * g.dot(x) + c;
    }
    VectorXd gradient(const Eigen::Ref<const VectorXd>& x) const { return 2.0 * (Q * x - g); }
};

/// Expectation of the fraction-averaged objective over i.i.d. per-fraction
/// random shifts.
///
/// The cumulative dose of an N-fraction treatment at systematic shift s and
/// random shifts t_i is (1/N) sum_i dose(x, s + t_i). With t drawn from a
/// discrete distribution the expectation of the quadratic objective is exact:
/// per voxel E[(D_v - dhat)^2] = (mean_v - dhat)^2 + var_v / N, where mean and
/// variance are taken over the shift distribution. The expectation is a
/// convex quadratic in the fluence.
class ExpectedObjective {
public:
    ExpectedObjective(const Phantom& phantom, const ObjectiveSpec& spec);

    /// Expected objective at fluence x, evaluated through per-scenario doses.
    /// Accepts any real systematic shift.
    double value(const Eigen::Ref<const VectorXd>& x, double systematic_shift,
                 const DiscreteScenarioSet& per_fraction, int fractions) const;

    /// The same expectation assembled as an explicit quadratic form.
    QuadraticForm fraction_quadratic(double systematic_shift, const DiscreteScenarioSet& per_fraction,
                                     int fractions) const;

    /// Batch assembly for systematic shifts that are integer multiples of the
    /// grid spacing; one entry per requested step, sharing the per-fraction
    /// distribution. Equivalent to fraction_quadratic on each step but far
    /// cheaper for scenario batches.
    std::vector<QuadraticForm> fraction_quadratics_grid(const std::vector<long>& systematic_steps,
                                                        const DiscreteScenarioSet& per_fraction,
                                                        int fractions) const;

    /// Quadratic of the plain (unshifted, error-free) objective.
    QuadraticForm nominal_quadratic() const;

    const Phantom& phantom() const { return *phantom_; }
    const ObjectiveSpec& spec() const { return spec_; }

private:
    const Phantom* phantom_;
    ObjectiveSpec spec_;
    VectorXd omega_;       // combined per-voxel weight sum_r w_r * delta_vr
    VectorXd yhat_;        // sum_r w_r * dhat_r * delta_vr
    double constant_ = 0;  // sum_r w_r * dhat_r^2
    std::vector<long> beamlet_steps_;  // beamlet centers as grid-step offsets
    double kernel_value(long step_offset) const;
    std::vector<double> kernel_symbol_;  // kernel at integer grid offsets
    long symbol_radius_ = 0;
};

/// Spec-level convenience: expectation with t ~ N(0, sigma_u^2) discretized
/// on the grid spacing.
double expected_fraction_objective(const ExpectedObjective& objective,
                                   const Eigen::Ref<const VectorXd>& x, double systematic_shift,
                                   double sigma_u, int fractions, double half_width = 3.0);

/// Dose-volume quality gate: Dxx of `roi` must be at least / at most
/// `dose_pct` percent of the prescription.
struct QualityCriterion {
    enum class Direction { AtLeast, AtMost };
    RoiName roi = RoiName::Ctv;
    double volume_pct = 99.0;
    double dose_pct = 90.0;
    Direction direction = Direction::AtLeast;

    std::string label() const;
};

/// The standard three-criterion gate: CTV D99 >= 90% plus configurable OAR
/// ceilings for right-OAR D30 and left-OAR D20.
std::vector<QualityCriterion> standard_criteria(double right_d30_max_pct, double left_d20_max_pct);

/// Highest dose level received by at least `volume_pct` percent of the ROI
/// volume. Computed on the discrete weights by descending-dose accumulation;
/// no interpolation.
double dxx(const Eigen::Ref<const VectorXd>& dose, const Eigen::Ref<const VectorXd>& roi_weights,
           double volume_pct);

struct CriteriaOutcome {
    std::vector<bool> passed;
    std::vector<double> dxx_value;  // absolute dose units

    bool all_passed() const;
    /// True if any failed criterion is an at-least (coverage) criterion.
    bool coverage_violated(const std::vector<QualityCriterion>& criteria) const;
    /// True if any failed criterion is an at-most (sparing) criterion.
    bool sparing_violated(const std::vector<QualityCriterion>& criteria) const;
};

CriteriaOutcome evaluate_criteria(const Eigen::Ref<const VectorXd>& dose, const Phantom& phantom,
                                  const std::vector<QualityCriterion>& criteria, double prescription);

}  // namespace rtadapt
