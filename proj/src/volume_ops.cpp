#include "liverseg/volume_ops.hpp"

#include <algorithm>
#include <cmath>

namespace liverseg {

float sample_trilinear(const Volume& vol, double x, double y, double z)
{
    const auto& d = vol.dims();
    x = std::clamp(x, 0.0, static_cast<double>(d[0] - 1));
    y = std::clamp(y, 0.0, static_cast<double>(d[1] - 1));
    z = std::clamp(z, 0.0, static_cast<double>(d[2] - 1));

    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    int z0 = static_cast<int>(std::floor(z));
    int x1 = std::min(x0 + 1, d[0] - 1);
    int y1 = std::min(y0 + 1, d[1] - 1);
    int z1 = std::min(z0 + 1, d[2] - 1);
    double fx = x - x0, fy = y - y0, fz = z - z0;

    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double c00 = lerp(vol.at(x0, y0, z0), vol.at(x1, y0, z0), fx);
    double c10 = lerp(vol.at(x0, y1, z0), vol.at(x1, y1, z0), fx);
    double c01 = lerp(vol.at(x0, y0, z1), vol.at(x1, y0, z1), fx);
    double c11 = lerp(vol.at(x0, y1, z1), vol.at(x1, y1, z1), fx);
    return static_cast<float>(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz));
}

Volume resample(const Volume& vol, Dims3 target_dims)
{
    const auto& d = vol.dims();
    for (int a = 0; a < 3; ++a) {
        if (d[a] < 2)
            throw std::invalid_argument("resample: input dims must be >= 2 along every axis");
        if (target_dims[a] < 2)
            throw std::invalid_argument("resample: target dims must be >= 2 along every axis");
    }

    Spacing3 out_spacing;
    std::array<double, 3> scale;
    for (int a = 0; a < 3; ++a) {
        scale[a] = static_cast<double>(d[a]) / target_dims[a];
        out_spacing[a] = vol.spacing()[a] * scale[a];
    }

    Volume out(target_dims, out_spacing);
    for (int z = 0; z < target_dims[2]; ++z) {
        double sz = (z + 0.5) * scale[2] - 0.5;
        for (int y = 0; y < target_dims[1]; ++y) {
            double sy = (y + 0.5) * scale[1] - 0.5;
            for (int x = 0; x < target_dims[0]; ++x) {
                double sx = (x + 0.5) * scale[0] - 0.5;
                out.at(x, y, z) = sample_trilinear(vol, sx, sy, sz);
            }
        }
    }
    return out;
}

Volume window_normalize(const Volume& vol, double level, double width)
{
    if (!(width > 0.0))
        throw std::invalid_argument("window_normalize: width must be positive");

    Volume out(vol.dims(), vol.spacing());
    const double scale = 256.0 / width;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        double v = (vol[i] - level) * scale;
        out[i] = static_cast<float>(std::clamp(v, -128.0, 128.0));
    }
    return out;
}

}  // namespace liverseg
