#pragma once

#include "liverseg/grid.hpp"

namespace liverseg {

struct DiffusionParams {
    int iterations = 5;
    double time_step = 1.0 / 6.0;  // explicit-scheme stability bound for 6 neighbors
    double conductance = 30.0;     // edge threshold in intensity units

    void validate() const
    {
        if (iterations < 0)
            throw std::invalid_argument("diffusion: iterations must be >= 0");
        if (!(time_step > 0.0) || time_step > 1.0 / 6.0 + 1e-12)
            throw std::invalid_argument("diffusion: time_step must lie in (0, 1/6]");
        if (!(conductance > 0.0))
            throw std::invalid_argument("diffusion: conductance must be positive");
    }
};

// Explicit Perona-Malik scheme over 6-neighborhoods with exponential
// conductance g(d) = exp(-(d/conductance)^2) and zero-flux borders.
Volume anisotropic_diffusion(const Volume& vol, const DiffusionParams& params);

}  // namespace liverseg
