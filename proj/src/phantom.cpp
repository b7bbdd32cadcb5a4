#include "rtadapt/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rtadapt {

double Interval::overlap(double a, double b) const {
    const double lo_clip = std::max(lo, a);
    const double hi_clip = std::min(hi, b);
    return std::max(0.0, hi_clip - lo_clip);
}

std::string roi_label(RoiName roi) {
    switch (roi) {
        case RoiName::Ctv: return "ctv";
        case RoiName::Ptv: return "ptv";
        case RoiName::LeftOar: return "left_oar";
        case RoiName::RightOar: return "right_oar";
        case RoiName::External: return "external";
    }
    return "?";
}

VoxelGrid VoxelGrid::uniform(double lo, double hi, double spacing) {
    if (spacing <= 0.0) throw std::invalid_argument("voxel spacing must be positive");
    if (hi <= lo) throw std::invalid_argument("grid extent inverted");
    const int n = static_cast<int>(std::llround((hi - lo) / spacing)) + 1;
    if (std::abs(lo + (n - 1) * spacing - hi) > 1e-9)
        throw std::invalid_argument("grid extent is not a whole number of voxels");
    VoxelGrid grid;
    grid.spacing = spacing;
    grid.positions = VectorXd::LinSpaced(n, lo, hi);
    return grid;
}

double margin(double sigma_systematic, double sigma_random) {
    if (sigma_systematic < 0.0 || sigma_random < 0.0)
        throw std::invalid_argument("margin inputs must be nonnegative");
    return 1.96 * sigma_systematic + 0.7 * sigma_random;
}

Interval ptv_from_margin(const Interval& ctv, double m, const VoxelGrid& grid) {
    if (m < 0.0) throw std::invalid_argument("margin must be nonnegative");
    return Interval{std::max(ctv.lo - m, grid.lo()), std::min(ctv.hi + m, grid.hi())};
}

namespace {

int roi_index(RoiName roi) { return static_cast<int>(roi); }

void check_interval(const Interval& iv, const char* name) {
    if (!(iv.lo < iv.hi)) throw std::invalid_argument(std::string(name) + ": interval inverted or empty");
}

}  // namespace

Phantom Phantom::build(const PhantomConfig& config) {
    Phantom p;
    p.config_ = config;
    p.grid_ = VoxelGrid::uniform(config.grid_lo_mm, config.grid_hi_mm, config.spacing_mm);
    if (config.kernel_sigma_mm <= 0.0) throw std::invalid_argument("kernel sigma must be positive");
    p.kernel_sigma_ = config.kernel_sigma_mm;

    check_interval(config.ctv, "ctv");
    check_interval(config.left_oar, "left_oar");
    check_interval(config.right_oar, "right_oar");

    Interval ptv;
    if (config.ptv) {
        ptv = *config.ptv;
        check_interval(ptv, "ptv");
    } else {
        ptv = ptv_from_margin(config.ctv,
                              margin(config.prior_systematic_std_mm, config.prior_random_std_mm),
                              p.grid_);
    }
    p.config_.ptv = ptv;

    const Interval extent{p.grid_.lo(), p.grid_.hi()};
    for (const auto& [iv, name] : {std::pair{config.ctv, "ctv"}, {ptv, "ptv"},
                                   {config.left_oar, "left_oar"}, {config.right_oar, "right_oar"}}) {
        if (!extent.contains(iv))
            throw std::invalid_argument(std::string(name) + ": interval outside the grid extent");
    }

    p.intervals_[roi_index(RoiName::Ctv)] = config.ctv;
    p.intervals_[roi_index(RoiName::Ptv)] = ptv;
    p.intervals_[roi_index(RoiName::LeftOar)] = config.left_oar;
    p.intervals_[roi_index(RoiName::RightOar)] = config.right_oar;
    p.intervals_[roi_index(RoiName::External)] = extent;

    // Beamlets live on the voxel grid, by default one per voxel center.
    const double pitch = config.beamlet_spacing_mm > 0.0 ? config.beamlet_spacing_mm : config.spacing_mm;
    const long stride = std::lround(pitch / config.spacing_mm);
    if (stride < 1 || std::abs(pitch - stride * config.spacing_mm) > 1e-9)
        throw std::invalid_argument("beamlet spacing must be a whole number of voxels");
    const int n_beamlets = (p.grid_.size() - 1) / static_cast<int>(stride) + 1;
    p.beamlet_centers_.resize(n_beamlets);
    for (int b = 0; b < n_beamlets; ++b)
        p.beamlet_centers_(b) = p.grid_.positions(b * static_cast<int>(stride));

    p.rebuild_weights();
    return p;
}

void Phantom::rebuild_weights() {
    const int n = grid_.size();
    const double h = grid_.spacing;

    auto cell_overlap_fraction = [&](int v, const Interval& iv) {
        const double lo = grid_.positions(v) - 0.5 * h;
        return iv.overlap(lo, lo + h) / h;
    };

    for (RoiName roi : {RoiName::Ctv, RoiName::Ptv, RoiName::LeftOar, RoiName::RightOar}) {
        VectorXd w = VectorXd::Zero(n);
        const Interval& iv = intervals_[roi_index(roi)];
        for (int v = 0; v < n; ++v) w(v) = cell_overlap_fraction(v, iv);
        const double total = w.sum();
        if (total <= 0.0) throw std::invalid_argument(roi_label(roi) + ": ROI covers no voxels");
        weights_[roi_index(roi)] = w / total;
    }

    // External: whatever part of each cell is not covered by CTV, PTV or an
    // OAR. Covered length is computed on the union, so the PTV-OAR overlap is
    // not double counted.
    VectorXd ext = VectorXd::Zero(n);
    for (int v = 0; v < n; ++v) {
        // Edge cells are clipped to the phantom extent; there is no external
        // tissue beyond the grid.
        const double lo = std::max(grid_.positions(v) - 0.5 * h, grid_.lo());
        const double hi = std::min(grid_.positions(v) + 0.5 * h, grid_.hi());
        // Union of up to four intervals on a line: sweep the sorted edges.
        std::array<Interval, 4> parts = {intervals_[roi_index(RoiName::Ctv)],
                                         intervals_[roi_index(RoiName::Ptv)],
                                         intervals_[roi_index(RoiName::LeftOar)],
                                         intervals_[roi_index(RoiName::RightOar)]};
        std::sort(parts.begin(), parts.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        double covered = 0.0;
        double cursor = lo;
        for (const Interval& iv : parts) {
            const double a = std::max(iv.lo, cursor);
            const double b = std::min(iv.hi, hi);
            if (b > a) {
                covered += b - a;
                cursor = b;
            }
        }
        ext(v) = (hi - lo - covered) / h;
    }
    const double ext_total = ext.sum();
    if (ext_total > 0.0) {
        weights_[roi_index(RoiName::External)] = ext / ext_total;
    } else {
        weights_[roi_index(RoiName::External)] = VectorXd::Zero(n);
    }
}

const Interval& Phantom::roi_interval(RoiName roi) const { return intervals_[roi_index(roi)]; }

const VectorXd& Phantom::roi_weights(RoiName roi) const { return weights_[roi_index(roi)]; }

double Phantom::kernel(double distance_mm) const {
    const double z = distance_mm / kernel_sigma_;
    return std::exp(-0.5 * z * z);
}

MatrixXd Phantom::dose_matrix(double shift_mm) const {
    const int nv = grid_.size();
    const int nb = beamlet_count();
    MatrixXd a(nv, nb);
    for (int v = 0; v < nv; ++v) {
        const double pos = grid_.positions(v) - shift_mm;
        for (int b = 0; b < nb; ++b) a(v, b) = kernel(pos - beamlet_centers_(b));
    }
    return a;
}

VectorXd Phantom::dose(const Eigen::Ref<const VectorXd>& fluence, double shift_mm) const {
    if (fluence.size() != beamlet_count())
        throw std::invalid_argument("fluence length must equal the beamlet count");
    if ((fluence.array() < 0.0).any())
        throw std::invalid_argument("fluence entries must be nonnegative");
    return dose_matrix(shift_mm) * fluence;
}

Phantom Phantom::with_ptv(const Interval& new_ptv) const {
    Phantom p = *this;
    check_interval(new_ptv, "ptv");
    const Interval extent{grid_.lo(), grid_.hi()};
    if (!extent.contains(new_ptv)) throw std::invalid_argument("ptv: interval outside the grid extent");
    p.intervals_[roi_index(RoiName::Ptv)] = new_ptv;
    p.config_.ptv = new_ptv;
    p.rebuild_weights();
    return p;
}

}  // namespace rtadapt
