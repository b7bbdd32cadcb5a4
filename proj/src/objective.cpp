#include "rtadapt/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rtadapt {

double ObjectiveSpec::weight(RoiName roi) const {
    if (roi == target) return target_weight;
    switch (roi) {
        case RoiName::LeftOar: return left_oar_weight;
        case RoiName::RightOar: return right_oar_weight;
        case RoiName::External: return external_weight;
        default: return 0.0;
    }
}

ObjectiveSpec ObjectiveSpec::nominal(double prescription) {
    ObjectiveSpec spec;
    spec.target = RoiName::Ptv;
    spec.prescription = prescription;
    spec.right_oar_weight = 0.001;
    spec.left_oar_weight = 0.003;
    spec.external_weight = 0.001;
    return spec;
}

ObjectiveSpec ObjectiveSpec::robust(double prescription) {
    ObjectiveSpec spec;
    spec.target = RoiName::Ctv;
    spec.prescription = prescription;
    spec.right_oar_weight = 0.015;
    spec.left_oar_weight = 0.009;
    spec.external_weight = 0.001;
    return spec;
}

double penalty(const Eigen::Ref<const VectorXd>& dose, const Eigen::Ref<const VectorXd>& roi_weights,
               double prescribed) {
    if (dose.size() != roi_weights.size())
        throw std::invalid_argument("dose and ROI weights differ in length");
    return (roi_weights.array() * (dose.array() - prescribed).square()).sum();
}

double total_objective(const Eigen::Ref<const VectorXd>& dose, const Phantom& phantom,
                       const ObjectiveSpec& spec) {
    double total = 0.0;
    for (RoiName roi : spec.rois()) {
        const double w = spec.weight(roi);
        if (w == 0.0) continue;
        total += w * penalty(dose, phantom.roi_weights(roi), spec.prescribed_dose(roi));
    }
    return total;
}

ExpectedObjective::ExpectedObjective(const Phantom& phantom, const ObjectiveSpec& spec)
    : phantom_(&phantom), spec_(spec) {
    const int nv = phantom.grid().size();
    omega_ = VectorXd::Zero(nv);
    yhat_ = VectorXd::Zero(nv);
    constant_ = 0.0;
    for (RoiName roi : spec.rois()) {
        const double w = spec.weight(roi);
        if (w == 0.0) continue;
        const double dhat = spec.prescribed_dose(roi);
        omega_ += w * phantom.roi_weights(roi);
        yhat_ += (w * dhat) * phantom.roi_weights(roi);
        constant_ += w * dhat * dhat;
    }

    // Beamlet centers as integer grid offsets; required by the batch assembly.
    const double h = phantom.grid().spacing;
    const double origin = phantom.grid().positions(0);
    beamlet_steps_.resize(phantom.beamlet_count());
    for (int b = 0; b < phantom.beamlet_count(); ++b) {
        const double step = (phantom.beamlet_centers()(b) - origin) / h;
        beamlet_steps_[b] = std::lround(step);
        if (std::abs(step - static_cast<double>(beamlet_steps_[b])) > 1e-9)
            throw std::invalid_argument("beamlet centers must lie on the voxel grid");
    }

    // Kernel values at integer grid offsets, truncated where they underflow
    // below any numerically relevant level.
    symbol_radius_ = static_cast<long>(std::ceil(10.0 * phantom.kernel_sigma() / h)) + 1;
    kernel_symbol_.resize(2 * symbol_radius_ + 1);
    for (long m = -symbol_radius_; m <= symbol_radius_; ++m)
        kernel_symbol_[m + symbol_radius_] = phantom.kernel(static_cast<double>(m) * h);
}

double ExpectedObjective::kernel_value(long step_offset) const {
    if (step_offset < -symbol_radius_ || step_offset > symbol_radius_) return 0.0;
    return kernel_symbol_[step_offset + symbol_radius_];
}

double ExpectedObjective::value(const Eigen::Ref<const VectorXd>& x, double systematic_shift,
                                const DiscreteScenarioSet& per_fraction, int fractions) const {
    if (fractions < 1) throw std::invalid_argument("fractions must be >= 1");
    const int nv = phantom_->grid().size();
    VectorXd mean = VectorXd::Zero(nv);
    VectorXd second = VectorXd::Zero(nv);
    for (int k = 0; k < per_fraction.size(); ++k) {
        const VectorXd y = phantom_->dose_matrix(systematic_shift + per_fraction.shifts(k)) * x;
        mean += per_fraction.probs(k) * y;
        second += per_fraction.probs(k) * y.cwiseProduct(y);
    }
    const VectorXd variance = (second - mean.cwiseProduct(mean)).cwiseMax(0.0);

    double total = 0.0;
    for (RoiName roi : spec_.rois()) {
        const double w = spec_.weight(roi);
        if (w == 0.0) continue;
        total += w * penalty(mean, phantom_->roi_weights(roi), spec_.prescribed_dose(roi));
    }
    total += omega_.dot(variance) / static_cast<double>(fractions);
    return total;
}

QuadraticForm ExpectedObjective::fraction_quadratic(double systematic_shift,
                                                    const DiscreteScenarioSet& per_fraction,
                                                    int fractions) const {
    if (fractions < 1) throw std::invalid_argument("fractions must be >= 1");
    const int nb = phantom_->beamlet_count();
    const int nv = phantom_->grid().size();
    MatrixXd mean_op = MatrixXd::Zero(nv, nb);
    MatrixXd second = MatrixXd::Zero(nb, nb);
    for (int k = 0; k < per_fraction.size(); ++k) {
        const MatrixXd a = phantom_->dose_matrix(systematic_shift + per_fraction.shifts(k));
        mean_op += per_fraction.probs(k) * a;
        second.noalias() += per_fraction.probs(k) * a.transpose() * omega_.asDiagonal() * a;
    }
    const double inv_n = 1.0 / static_cast<double>(fractions);
    QuadraticForm form;
    form.Q = (1.0 - inv_n) * (mean_op.transpose() * omega_.asDiagonal() * mean_op) + inv_n * second;
    form.g = mean_op.transpose() * yhat_;
    form.c = constant_;
    return form;
}

QuadraticForm ExpectedObjective::nominal_quadratic() const {
    const MatrixXd a = phantom_->dose_matrix(0.0);
    QuadraticForm form;
    form.Q = a.transpose() * omega_.asDiagonal() * a;
    form.g = a.transpose() * yhat_;
    form.c = constant_;
    return form;
}

namespace {

/// M(alpha, alpha') = sum_v weight_v * sym(v - alpha) * sym(v - alpha') for
/// alpha in [alpha_lo, alpha_hi]; `sym` maps an integer offset to a value.
template <typename SymbolFn>
MatrixXd weighted_symbol_gram(const VectorXd& weight, SymbolFn sym, long alpha_lo, long alpha_hi) {
    const long width = alpha_hi - alpha_lo + 1;
    MatrixXd m = MatrixXd::Zero(width, width);
    VectorXd row(width);
    for (int v = 0; v < weight.size(); ++v) {
        if (weight(v) == 0.0) continue;
        for (long a = 0; a < width; ++a) row(a) = sym(v - (alpha_lo + a));
        m.selfadjointView<Eigen::Lower>().rankUpdate(row, weight(v));
    }
    m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
    return m;
}

}  // namespace

std::vector<QuadraticForm> ExpectedObjective::fraction_quadratics_grid(
    const std::vector<long>& systematic_steps, const DiscreteScenarioSet& per_fraction,
    int fractions) const {
    if (fractions < 1) throw std::invalid_argument("fractions must be >= 1");
    if (systematic_steps.empty()) return {};
    const double h = phantom_->grid().spacing;
    const int nk = per_fraction.size();
    std::vector<long> fraction_steps(nk);
    for (int k = 0; k < nk; ++k) {
        const double step = per_fraction.shifts(k) / h;
        fraction_steps[k] = std::lround(step);
        if (std::abs(step - static_cast<double>(fraction_steps[k])) > 1e-9)
            throw std::invalid_argument("per-fraction shifts must lie on the grid spacing");
    }

    const auto [bmin_it, bmax_it] = std::minmax_element(beamlet_steps_.begin(), beamlet_steps_.end());
    const auto [smin_it, smax_it] = std::minmax_element(systematic_steps.begin(), systematic_steps.end());
    const auto [kmin_it, kmax_it] = std::minmax_element(fraction_steps.begin(), fraction_steps.end());
    const long alpha_lo = *bmin_it + *smin_it;
    const long alpha_hi = *bmax_it + *smax_it;

    // Smoothed kernel symbol of the mean operator.
    const long bar_radius = symbol_radius_ + std::max(std::abs(*kmin_it), std::abs(*kmax_it));
    std::vector<double> bar_symbol(2 * bar_radius + 1, 0.0);
    for (long m = -bar_radius; m <= bar_radius; ++m) {
        double s = 0.0;
        for (int k = 0; k < nk; ++k) s += per_fraction.probs(k) * kernel_value(m - fraction_steps[k]);
        bar_symbol[m + bar_radius] = s;
    }
    auto bar = [&](long m) {
        return (m < -bar_radius || m > bar_radius) ? 0.0 : bar_symbol[m + bar_radius];
    };
    auto base = [&](long m) { return kernel_value(m); };

    // Gram matrices over the extended offset range; systematic scenarios map
    // to diagonal blocks of these.
    const MatrixXd mean_gram = weighted_symbol_gram(omega_, bar, alpha_lo, alpha_hi);
    const long base_lo = alpha_lo + *kmin_it;
    const long base_hi = alpha_hi + *kmax_it;
    const MatrixXd base_gram = weighted_symbol_gram(omega_, base, base_lo, base_hi);

    // Probability-weighted combination of shifted base blocks.
    const long width = alpha_hi - alpha_lo + 1;
    MatrixXd var_gram = MatrixXd::Zero(width, width);
    for (int k = 0; k < nk; ++k) {
        const long off = alpha_lo + fraction_steps[k] - base_lo;
        var_gram += per_fraction.probs(k) * base_gram.block(off, off, width, width);
    }

    VectorXd bar_target(width);
    for (long a = 0; a < width; ++a) {
        double s = 0.0;
        for (int v = 0; v < yhat_.size(); ++v) s += bar(v - (alpha_lo + a)) * yhat_(v);
        bar_target(a) = s;
    }

    const int nb = phantom_->beamlet_count();
    const double inv_n = 1.0 / static_cast<double>(fractions);
    std::vector<QuadraticForm> forms;
    forms.reserve(systematic_steps.size());
    for (long step : systematic_steps) {
        QuadraticForm form;
        form.Q.resize(nb, nb);
        form.g.resize(nb);
        form.c = constant_;
        for (int b = 0; b < nb; ++b) {
            const long ib = beamlet_steps_[b] + step - alpha_lo;
            form.g(b) = bar_target(ib);
            for (int b2 = 0; b2 < nb; ++b2) {
                const long ib2 = beamlet_steps_[b2] + step - alpha_lo;
                form.Q(b, b2) = (1.0 - inv_n) * mean_gram(ib, ib2) + inv_n * var_gram(ib, ib2);
            }
        }
        forms.push_back(std::move(form));
    }
    return forms;
}

double expected_fraction_objective(const ExpectedObjective& objective,
                                   const Eigen::Ref<const VectorXd>& x, double systematic_shift,
                                   double sigma_u, int fractions, double half_width) {
    const DiscreteScenarioSet set =
        discretize_normal(0.0, sigma_u, objective.phantom().grid().spacing, half_width);
    return objective.value(x, systematic_shift, set, fractions);
}

std::string QualityCriterion::label() const {
    return roi_label(roi) + "_d" + std::to_string(static_cast<int>(std::lround(volume_pct)));
}

std::vector<QualityCriterion> standard_criteria(double right_d30_max_pct, double left_d20_max_pct) {
    return {
        {RoiName::Ctv, 99.0, 90.0, QualityCriterion::Direction::AtLeast},
        {RoiName::RightOar, 30.0, right_d30_max_pct, QualityCriterion::Direction::AtMost},
        {RoiName::LeftOar, 20.0, left_d20_max_pct, QualityCriterion::Direction::AtMost},
    };
}

double dxx(const Eigen::Ref<const VectorXd>& dose, const Eigen::Ref<const VectorXd>& roi_weights,
           double volume_pct) {
    if (volume_pct <= 0.0 || volume_pct > 100.0)
        throw std::invalid_argument("volume percentage must lie in (0, 100]");
    if (dose.size() != roi_weights.size())
        throw std::invalid_argument("dose and ROI weights differ in length");

    std::vector<int> order;
    order.reserve(dose.size());
    for (int v = 0; v < dose.size(); ++v)
        if (roi_weights(v) > 0.0) order.push_back(v);
    if (order.empty()) throw std::invalid_argument("ROI has no volume");

    std::sort(order.begin(), order.end(), [&](int a, int b) { return dose(a) > dose(b); });
    const double needed = volume_pct / 100.0 - 1e-12;
    double accumulated = 0.0;
    for (int v : order) {
        accumulated += roi_weights(v);
        if (accumulated >= needed) return dose(v);
    }
    return dose(order.back());
}

bool CriteriaOutcome::all_passed() const {
    return std::all_of(passed.begin(), passed.end(), [](bool p) { return p; });
}

bool CriteriaOutcome::coverage_violated(const std::vector<QualityCriterion>& criteria) const {
    for (size_t i = 0; i < passed.size(); ++i)
        if (!passed[i] && criteria[i].direction == QualityCriterion::Direction::AtLeast) return true;
    return false;
}

bool CriteriaOutcome::sparing_violated(const std::vector<QualityCriterion>& criteria) const {
    for (size_t i = 0; i < passed.size(); ++i)
        if (!passed[i] && criteria[i].direction == QualityCriterion::Direction::AtMost) return true;
    return false;
}

CriteriaOutcome evaluate_criteria(const Eigen::Ref<const VectorXd>& dose, const Phantom& phantom,
                                  const std::vector<QualityCriterion>& criteria, double prescription) {
    CriteriaOutcome outcome;
    outcome.passed.reserve(criteria.size());
    outcome.dxx_value.reserve(criteria.size());
    for (const QualityCriterion& criterion : criteria) {
        const double level = dxx(dose, phantom.roi_weights(criterion.roi), criterion.volume_pct);
        const double threshold = criterion.dose_pct / 100.0 * prescription;
        const bool ok = criterion.direction == QualityCriterion::Direction::AtLeast
                            ? level >= threshold - 1e-12
                            : level <= threshold + 1e-12;
        outcome.passed.push_back(ok);
        outcome.dxx_value.push_back(level);
    }
    return outcome;
}

}  // namespace rtadapt
