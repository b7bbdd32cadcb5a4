#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>

namespace rtadapt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Closed interval [lo, hi] in mm on the phantom axis.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double length() const { return hi - lo; }
    bool contains(const Interval& other) const { return lo <= other.lo && other.hi <= hi; }

    /// Length of the overlap with [a, b]; zero when disjoint.
    double overlap(double a, double b) const;

    bool operator==(const Interval&) const = default;
};

enum class RoiName { Ctv, Ptv, LeftOar, RightOar, External };

constexpr std::array<RoiName, 5> kAllRois = {RoiName::Ctv, RoiName::Ptv, RoiName::LeftOar,
                                             RoiName::RightOar, RoiName::External};

std::string roi_label(RoiName roi);

/// Uniform 1D voxel grid; positions are the voxel centers.
struct VoxelGrid {
    VectorXd positions;  // strictly increasing, uniformly spaced
    double spacing = 1.0;

    static VoxelGrid uniform(double lo, double hi, double spacing);

    int size() const { return static_cast<int>(positions.size()); }
    double lo() const { return positions(0); }
    double hi() const { return positions(positions.size() - 1); }
};

/// CTV-PTV safety margin from the total systematic and random error spread.
/// m = 1.96 * sigma_systematic + 0.7 * sigma_random, all in mm.
double margin(double sigma_systematic, double sigma_random);

/// Expands the CTV by m on both sides, clipped to the grid extent.
Interval ptv_from_margin(const Interval& ctv, double m, const VoxelGrid& grid);

struct PhantomConfig {
    double grid_lo_mm = -50.0;
    double grid_hi_mm = 50.0;
    double spacing_mm = 1.0;
    double kernel_sigma_mm = 3.0;
    /// Beamlet pitch; defaults to one beamlet per voxel. Must be an integer
    /// multiple of the voxel spacing.
    double beamlet_spacing_mm = 0.0;  // 0 = voxel spacing
    Interval ctv{-15.0, 15.0};
    Interval left_oar{-50.0, -25.0};
    Interval right_oar{23.0, 50.0};
    /// A-priori error spreads that define the default PTV via the margin
    /// formula; ignored when an explicit PTV interval is given.
    double prior_systematic_std_mm = 2.5;
    double prior_random_std_mm = 5.0;
    std::optional<Interval> ptv;  // explicit override

    bool operator==(const PhantomConfig&) const = default;
};

/// 1D voxelized patient geometry with per-ROI relative-volume weights and a
/// Gaussian beamlet dose operator. Immutable after construction; safe to
/// share across concurrent simulation workers.
class Phantom {
public:
    static Phantom build(const PhantomConfig& config);

    const VoxelGrid& grid() const { return grid_; }
    const Interval& roi_interval(RoiName roi) const;

    /// Relative-volume weights of one ROI over all voxels; nonnegative and
    /// normalized to sum exactly 1. Boundary voxels carry the fractional
    /// overlap of their 1-cell with the ROI interval.
    const VectorXd& roi_weights(RoiName roi) const;

    const VectorXd& beamlet_centers() const { return beamlet_centers_; }
    int beamlet_count() const { return static_cast<int>(beamlet_centers_.size()); }
    double kernel_sigma() const { return kernel_sigma_; }

    /// Kernel value at a signed distance in mm (unnormalized Gaussian, peak 1).
    double kernel(double distance_mm) const;

    /// Dose operator at a rigid patient shift: entry (v, b) is the dose at
    /// voxel v per unit fluence of beamlet b when the patient is displaced by
    /// `shift_mm`. Evaluated continuously; no re-binning.
    MatrixXd dose_matrix(double shift_mm) const;

    /// Dose received by the shifted patient: d_v = sum_b x_b * G(pos_v - shift - c_b).
    VectorXd dose(const Eigen::Ref<const VectorXd>& fluence, double shift_mm) const;

    /// Copy of this phantom with a replaced PTV; PTV and External weights are
    /// recomputed, everything else is shared geometry.
    Phantom with_ptv(const Interval& new_ptv) const;

    /// The config this phantom was built from (with the effective PTV filled in).
    const PhantomConfig& config() const { return config_; }

private:
    Phantom() = default;
    void rebuild_weights();

    PhantomConfig config_;
    VoxelGrid grid_;
    std::array<Interval, 5> intervals_{};
    std::array<VectorXd, 5> weights_{};
    VectorXd beamlet_centers_;
    double kernel_sigma_ = 3.0;
};

}  // namespace rtadapt
