#pragma once

// 3D texture features and the local appearance map: modified LBP with a
// noise margin, local neighbor variance, cumulative feature histograms and
// their L1 Wasserstein distance against a reference model fitted on the
// initial region.

#include <vector>

#include "liverseg/grid.hpp"

namespace liverseg {

struct LbpParams {
    double tau = 1.5;  // noise margin
    int p = 6;         // neighbor count
    double r = 1.0;    // sphere radius in voxels

    void validate() const
    {
        if (p < 1 || p > 26)
            throw std::invalid_argument("LbpParams: p must lie in [1, 26]");
        if (!(r > 0.0))
            throw std::invalid_argument("LbpParams: r must be positive");
        if (tau < 0.0)
            throw std::invalid_argument("LbpParams: tau must be non-negative");
    }
};

// Neighbor directions on the radius-r sphere. For the canonical (p=6, r=1)
// the set is the six axis-aligned unit offsets in the fixed order
// +x, -x, +y, -y, +z, -z; otherwise p spherical Fibonacci directions.
std::vector<std::array<double, 3>> lbp_neighbor_offsets(const LbpParams& params);

// Per-voxel LBP code: sum_p H(I_p - I_c - tau*sign(I_p - I_c)) * 2^p, with
// H(t) = 1 iff t > 0 and sign(0) = 0. Border voxels sample with clamped
// coordinates; off-grid neighbor positions are sampled trilinearly.
Grid3<std::int32_t> lbp3d(const Volume& vol, const LbpParams& params);

// Per-voxel population variance of the p spherical neighbors.
Grid3<float> var3d(const Volume& vol, const LbpParams& params);

struct CumulativeHistogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> cum;  // non-decreasing, last entry 1

    int bins() const { return static_cast<int>(cum.size()); }
    double bin_width() const { return (hi - lo) / bins(); }
};

CumulativeHistogram cumulative_histogram(const std::vector<double>& values,
                                         double lo, double hi, int bins);

// Wasserstein-1 distance between two histograms on identical binning:
// sum_b |h1[b] - h2[b]| * bin_width.
double wasserstein_l1(const CumulativeHistogram& h1, const CumulativeHistogram& h2);

struct JointFeatureVolume {
    Volume intensity;
    Grid3<std::int32_t> lbp;
    Grid3<float> var;
};

JointFeatureVolume compute_features(const Volume& vol, const LbpParams& params);

// Whether the appearance denominator is the reference variance (one squaring
// total, the default reading) or its square.
enum class VarianceMode { variance, variance_squared };

struct FeatureHistogramModel {
    static constexpr int kFeatures = 3;  // intensity, lbp, var
    std::array<CumulativeHistogram, kFeatures> reference;
    std::array<double, kFeatures> variance{0, 0, 0};
    std::array<bool, kFeatures> enabled{true, true, true};

    double total_variance() const
    {
        double s = 0.0;
        for (int i = 0; i < kFeatures; ++i)
            s += variance[i];
        return s;
    }

    void save(const std::string& path) const;
    static FeatureHistogramModel load(const std::string& path);
};

// Fits reference cumulative histograms and per-feature variances over L0.
// Intensity and variance features use `bins` bins over the L0 min/max range
// padded by 1%; the LBP feature bins the integer code range [0, 2^p - 1]
// directly. A zero-variance feature is flagged disabled (its appearance term
// would divide by zero).
FeatureHistogramModel fit_reference_model(const JointFeatureVolume& features,
                                          const LabelMask& l0, int bins,
                                          const LbpParams& params);

// Local appearance map: per voxel, sum over enabled features of
// W1(H_x, H_0) / denom, with H_x computed over the window clipped to the
// volume. Window dims must be odd; the default is 9x9x5 (5 through-plane).
Grid3<float> appearance_map(const JointFeatureVolume& features,
                            const FeatureHistogramModel& model,
                            Dims3 window,
                            VarianceMode mode = VarianceMode::variance);

}  // namespace liverseg
