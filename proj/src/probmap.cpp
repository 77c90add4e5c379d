#include "liverseg/probmap.hpp"

#include <cmath>
#include <vector>

namespace liverseg {

LabelMask threshold_likelihood(const ProbabilityMap& map, double threshold)
{
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("threshold_likelihood: threshold must lie in (0,1)");

    LabelMask mask(map.dims(), map.spacing());
    for (std::size_t i = 0; i < map.size(); ++i)
        mask[i] = map[i] >= threshold ? 1 : 0;
    return mask;
}

LabelMask largest_component(const LabelMask& mask)
{
    const auto& d = mask.dims();
    std::vector<std::int32_t> comp(mask.size(), -1);
    std::vector<std::size_t> stack;
    std::size_t best_size = 0;
    std::int32_t best_id = -1;
    std::int32_t next_id = 0;

    const std::ptrdiff_t sx = 1;
    const std::ptrdiff_t sy = d[0];
    const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(d[0]) * d[1];

    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
        if (!mask[seed] || comp[seed] >= 0)
            continue;
        std::int32_t id = next_id++;
        std::size_t count = 0;
        stack.clear();
        stack.push_back(seed);
        comp[seed] = id;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            ++count;
            int x = static_cast<int>(i % d[0]);
            int y = static_cast<int>((i / d[0]) % d[1]);
            int z = static_cast<int>(i / (static_cast<std::size_t>(d[0]) * d[1]));
            auto visit = [&](bool ok, std::ptrdiff_t step) {
                if (!ok)
                    return;
                std::size_t j = i + step;
                if (mask[j] && comp[j] < 0) {
                    comp[j] = id;
                    stack.push_back(j);
                }
            };
            visit(x + 1 < d[0], sx);
            visit(x > 0, -sx);
            visit(y + 1 < d[1], sy);
            visit(y > 0, -sy);
            visit(z + 1 < d[2], sz);
            visit(z > 0, -sz);
        }
        if (count > best_size) {
            best_size = count;
            best_id = id;
        }
    }

    LabelMask out(mask.dims(), mask.spacing());
    if (best_id >= 0)
        for (std::size_t i = 0; i < mask.size(); ++i)
            out[i] = comp[i] == best_id ? 1 : 0;
    return out;
}

IntensityRange estimate_intensity_range(const Volume& vol, const LabelMask& l0)
{
    require_same_shape(vol.dims(), l0.dims(), "estimate_intensity_range");

    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!l0[i])
            continue;
        sum += vol[i];
        sum2 += static_cast<double>(vol[i]) * vol[i];
        ++n;
    }
    if (n == 0)
        throw std::invalid_argument("estimate_intensity_range: empty L0");

    IntensityRange r;
    r.mean = sum / static_cast<double>(n);
    double var = std::max(0.0, sum2 / static_cast<double>(n) - r.mean * r.mean);
    r.stddev = std::sqrt(var);
    r.zeta = r.mean - 3.0 * r.stddev;
    r.eta = r.mean + 3.5 * r.stddev;
    r.validate();
    return r;
}

}  // namespace liverseg
