#include "liverseg/energy.hpp"

#include <cmath>

#include "liverseg/parallel.hpp"

namespace liverseg {

double default_gamma(const FeatureHistogramModel& model)
{
    return model.total_variance() / 36.0;
}

Grid3<float> threshold_map(const Volume& vol, const IntensityRange& range)
{
    range.validate();
    const double inv_d2 = 1.0 / ((range.eta - range.zeta) * (range.eta - range.zeta));
    Grid3<float> f(vol.dims(), vol.spacing());
    for (std::size_t i = 0; i < vol.size(); ++i) {
        double v = vol[i];
        f[i] = static_cast<float>((v - range.zeta) * (v - range.eta) * inv_d2);
    }
    return f;
}

double boundary_weight(double i1, double i2, double beta)
{
    if (!(beta > 0.0))
        throw std::invalid_argument("boundary_weight: beta must be positive");
    double diff = i1 - i2;
    return 1.0 / (1.0 + beta * diff * diff);
}

Grid3<float> region_score(const Volume& vol, const Grid3<float>& f,
                          const ProbabilityMap& likelihood,
                          const Grid3<float>& appearance, const EnergyParams& params)
{
    params.validate();
    require_same_shape(vol.dims(), f.dims(), "region_score");
    require_same_shape(vol.dims(), likelihood.dims(), "region_score");
    const bool use_appearance = params.gamma > 0.0 && !appearance.empty();
    if (use_appearance)
        require_same_shape(vol.dims(), appearance.dims(), "region_score");

    const auto& d = vol.dims();
    Grid3<float> r(d, vol.spacing());
    parallel_for(0, d[2], [&](int z) {
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                double c = vol.at(x, y, z);
                double bsum = 0.0;
                auto add = [&](int nx, int ny, int nz) {
                    if (vol.contains(nx, ny, nz))
                        bsum += boundary_weight(c, vol.at(nx, ny, nz), params.beta);
                };
                add(x + 1, y, z);
                add(x - 1, y, z);
                add(x, y + 1, z);
                add(x, y - 1, z);
                add(x, y, z + 1);
                add(x, y, z - 1);

                double app = use_appearance ? params.gamma * appearance.at(x, y, z) : 0.0;
                double like = likelihood.at(x, y, z) - 0.5;
                double bracket = params.sign_mode == SignMode::literal
                                     ? f.at(x, y, z) + like + app
                                     : -f.at(x, y, z) + like - app;
                r.at(x, y, z) = static_cast<float>(bsum * bracket);
            }
    });
    return r;
}

double data_term(double r_value, int label)
{
    return std::max(-r_value, 0.0) * label + std::max(r_value, 0.0) * (1 - label);
}

double total_energy(const Volume& vol, const LabelMask& labels,
                    const Grid3<float>& r, const EnergyParams& params)
{
    params.validate();
    require_same_shape(vol.dims(), labels.dims(), "total_energy");
    require_same_shape(vol.dims(), r.dims(), "total_energy");

    const auto& d = vol.dims();
    double data = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i)
        data += data_term(r[i], labels[i]);

    // Each unordered 6-neighbor pair counted once via the +axis neighbors.
    double boundary = 0.0;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                double c = vol.at(x, y, z);
                int l = labels.at(x, y, z);
                auto add = [&](int nx, int ny, int nz) {
                    if (vol.contains(nx, ny, nz) && l != labels.at(nx, ny, nz))
                        boundary += boundary_weight(c, vol.at(nx, ny, nz), params.beta);
                };
                add(x + 1, y, z);
                add(x, y + 1, z);
                add(x, y, z + 1);
            }
    return params.lambda * data + boundary;
}

GridGraph build_graph(const Grid3<float>& r, const Volume& vol,
                      const EnergyParams& params)
{
    params.validate();
    require_same_shape(vol.dims(), r.dims(), "build_graph");

    const auto& d = vol.dims();
    GridGraph g;
    g.dims = d;
    g.num_nodes = static_cast<int>(r.size());
    g.cap_source.resize(r.size());
    g.cap_sink.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        double rv = r[i];
        g.cap_source[i] = params.lambda * std::max(rv, 0.0);
        g.cap_sink[i] = params.lambda * std::max(-rv, 0.0);
    }

    g.edges.reserve(r.size() * 3);
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                auto u = static_cast<std::int32_t>(vol.index(x, y, z));
                double c = vol.at(x, y, z);
                auto add = [&](int nx, int ny, int nz) {
                    if (!vol.contains(nx, ny, nz))
                        return;
                    auto v = static_cast<std::int32_t>(vol.index(nx, ny, nz));
                    g.edges.push_back(
                        {u, v, boundary_weight(c, vol.at(nx, ny, nz), params.beta)});
                };
                add(x + 1, y, z);
                add(x, y + 1, z);
                add(x, y, z + 1);
            }
    return g;
}

}  // namespace liverseg
