#pragma once

#include "liverseg/grid.hpp"

namespace liverseg {

// Liver intensity range [zeta, eta] = [m - 3*sigma, m + 3.5*sigma] estimated
// over the initial region L0.
struct IntensityRange {
    double zeta = 0.0;
    double eta = 0.0;
    double mean = 0.0;
    double stddev = 0.0;

    void validate() const
    {
        if (!(zeta < eta))
            throw std::invalid_argument("IntensityRange: zeta must be < eta "
                                        "(degenerate range, e.g. zero variance)");
    }
};

// Voxel labeled 1 iff L(x) >= threshold; threshold must lie in (0,1).
LabelMask threshold_likelihood(const ProbabilityMap& map, double threshold);

// Keep only the largest 6-connected foreground component.
LabelMask largest_component(const LabelMask& mask);

IntensityRange estimate_intensity_range(const Volume& vol, const LabelMask& l0);

}  // namespace liverseg
