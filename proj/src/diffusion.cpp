#include "liverseg/diffusion.hpp"

#include <cmath>

#include "liverseg/parallel.hpp"

namespace liverseg {

Volume anisotropic_diffusion(const Volume& vol, const DiffusionParams& params)
{
    params.validate();

    Volume cur = vol;
    Volume next(vol.dims(), vol.spacing());
    const auto& d = vol.dims();
    const double inv_k2 = 1.0 / (params.conductance * params.conductance);
    const double dt = params.time_step;

    for (int it = 0; it < params.iterations; ++it) {
        parallel_for(0, d[2], [&](int z) {
            for (int y = 0; y < d[1]; ++y)
                for (int x = 0; x < d[0]; ++x) {
                    double c = cur.at(x, y, z);
                    double flux = 0.0;
                    // Zero-flux borders: missing neighbors contribute nothing.
                    auto add = [&](int nx, int ny, int nz) {
                        if (!cur.contains(nx, ny, nz))
                            return;
                        double diff = cur.at(nx, ny, nz) - c;
                        flux += std::exp(-diff * diff * inv_k2) * diff;
                    };
                    add(x + 1, y, z);
                    add(x - 1, y, z);
                    add(x, y + 1, z);
                    add(x, y - 1, z);
                    add(x, y, z + 1);
                    add(x, y, z - 1);
                    next.at(x, y, z) = static_cast<float>(c + dt * flux);
                }
        });
        std::swap(cur, next);
    }
    return cur;
}

}  // namespace liverseg
