#pragma once

// Sliver07-style evaluation: the five accuracy measures, their linear
// scoring, and volume agreement statistics (correlation, Bland-Altman, CV).

#include <vector>

#include "liverseg/grid.hpp"

namespace liverseg {

struct SurfaceDistances {
    double asd = 0.0;   // mm
    double rmsd = 0.0;  // mm
    double msd = 0.0;   // mm
};

struct MetricReport {
    double voe = 0.0;  // percent
    double rvd = 0.0;  // signed percent
    SurfaceDistances dist;
    std::array<double, 5> scores{};  // voe, rvd, asd, rmsd, msd
    double total_score = 0.0;
};

// 100 * (1 - |A intersect B| / |A union B|).
double voe(const LabelMask& a, const LabelMask& b);

// 100 * (|A| - |B|) / |B|; b is the reference.
double rvd(const LabelMask& a, const LabelMask& b);

// Symmetric surface distances over border voxels (foreground voxels with a
// background 6-neighbor; the volume border counts as background). Distances
// are voxel-center Euclidean distances in mm.
SurfaceDistances surface_distances(const LabelMask& a, const LabelMask& b);

// Per-metric score max(0, 100 - 25*value/ref) with reference errors
// (6.4, 4.7, 1.0, 1.8, 19.0); RVD is scored on its absolute value.
std::array<double, 5> sliver_scores(double voe_pct, double rvd_pct,
                                    const SurfaceDistances& dist);

MetricReport evaluate_masks(const LabelMask& result, const LabelMask& reference);

// Foreground voxel count times voxel volume, in mL.
double mask_volume_ml(const LabelMask& mask);

struct VolumeStats {
    double slope = 0.0;      // auto = slope * manual + intercept
    double intercept = 0.0;
    double correlation = 0.0;
    double mean_difference = 0.0;  // auto - manual, mL
    double loa_low = 0.0;          // mean - 1.96 SD
    double loa_high = 0.0;         // mean + 1.96 SD
    double cv_percent = 0.0;       // SD(differences) / mean(all volumes) * 100
};

VolumeStats volume_stats(const std::vector<std::pair<double, double>>& pairs);

}  // namespace liverseg
