#pragma once

// Synthetic ellipsoid phantoms: a noisy intensity volume, its exact ground
// truth mask, and a probability map built by blending the mask with a
// Gaussian-blurred copy (so the 0.5-superlevel set of the map equals the
// mask exactly).

#include <optional>
#include <string>

#include "liverseg/grid.hpp"

namespace liverseg {

struct Ellipsoid {
    std::array<double, 3> center{0, 0, 0};  // voxel coordinates
    std::array<double, 3> radii{1, 1, 1};   // voxels
};

struct PhantomSpec {
    Dims3 dims{64, 64, 64};
    Spacing3 spacing{1.0, 1.0, 1.0};
    Ellipsoid liver;
    double liver_mean = 120.0;
    double noise_sigma = 8.0;
    double background_mean = 0.0;
    // Optional confounder blob: same mean intensity as the liver but its own
    // noise level, i.e. a different texture.
    std::optional<Ellipsoid> confounder;
    double confounder_noise_sigma = 8.0;
    double blur_sigma = 2.0;  // voxels, for the probability map
    std::uint64_t seed = 1;
};

struct Phantom {
    Volume volume;
    LabelMask mask;
    ProbabilityMap probability;
};

Phantom make_phantom(const PhantomSpec& spec);

// Key-value text file ("key = value" per line); unknown keys are rejected.
PhantomSpec load_phantom_spec(const std::string& path);

// Separable Gaussian blur with replicated borders (shared with the phantom
// probability-map construction; exposed for tests).
Grid3<float> gaussian_blur(const Grid3<float>& in, double sigma);

}  // namespace liverseg
