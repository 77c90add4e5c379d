#include "liverseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace liverseg {
namespace {

constexpr double kInf = 1e30;

std::size_t count_foreground(const LabelMask& m)
{
    std::size_t n = 0;
    for (auto v : m.data())
        n += v;
    return n;
}

// Foreground voxels with at least one background 6-neighbor; the volume
// border counts as background.
std::vector<std::size_t> border_voxels(const LabelMask& m)
{
    const auto& d = m.dims();
    std::vector<std::size_t> border;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                if (!m.at(x, y, z))
                    continue;
                auto bg = [&](int nx, int ny, int nz) {
                    return !m.contains(nx, ny, nz) || !m.at(nx, ny, nz);
                };
                if (bg(x + 1, y, z) || bg(x - 1, y, z) || bg(x, y + 1, z) ||
                    bg(x, y - 1, z) || bg(x, y, z + 1) || bg(x, y, z - 1))
                    border.push_back(m.index(x, y, z));
            }
    return border;
}

// One pass of the lower-envelope distance transform along a line with sample
// step `s` (Felzenszwalb/Huttenlocher), in place on squared distances.
void dt1d(std::vector<double>& f, double s, std::vector<double>& out,
          std::vector<int>& v, std::vector<double>& z)
{
    const int n = static_cast<int>(f.size());
    v.resize(n);
    z.resize(n + 1);
    out.resize(n);
    const double s2 = s * s;

    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double inter;
        while (true) {
            int p = v[k];
            inter = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
            if (inter <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = inter;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q)
            ++k;
        double dq = s * (q - v[k]);
        out[q] = dq * dq + f[v[k]];
    }
    std::copy(out.begin(), out.end(), f.begin());
}

// Exact squared Euclidean distance (mm^2) to the given seed voxels.
Grid3<double> distance_transform(const Dims3& dims, const Spacing3& spacing,
                                 const std::vector<std::size_t>& seeds)
{
    Grid3<double> dist(dims, spacing, kInf);
    for (auto i : seeds)
        dist[i] = 0.0;

    std::vector<double> line, out, z;
    std::vector<int> v;

    // x lines
    line.resize(dims[0]);
    for (int zz = 0; zz < dims[2]; ++zz)
        for (int yy = 0; yy < dims[1]; ++yy) {
            for (int xx = 0; xx < dims[0]; ++xx)
                line[xx] = dist.at(xx, yy, zz);
            dt1d(line, spacing[0], out, v, z);
            for (int xx = 0; xx < dims[0]; ++xx)
                dist.at(xx, yy, zz) = line[xx];
        }
    // y lines
    line.resize(dims[1]);
    for (int zz = 0; zz < dims[2]; ++zz)
        for (int xx = 0; xx < dims[0]; ++xx) {
            for (int yy = 0; yy < dims[1]; ++yy)
                line[yy] = dist.at(xx, yy, zz);
            dt1d(line, spacing[1], out, v, z);
            for (int yy = 0; yy < dims[1]; ++yy)
                dist.at(xx, yy, zz) = line[yy];
        }
    // z lines
    line.resize(dims[2]);
    for (int yy = 0; yy < dims[1]; ++yy)
        for (int xx = 0; xx < dims[0]; ++xx) {
            for (int zz = 0; zz < dims[2]; ++zz)
                line[zz] = dist.at(xx, yy, zz);
            dt1d(line, spacing[2], out, v, z);
            for (int zz = 0; zz < dims[2]; ++zz)
                dist.at(xx, yy, zz) = line[zz];
        }
    return dist;
}

}  // namespace

double voe(const LabelMask& a, const LabelMask& b)
{
    require_same_shape(a.dims(), b.dims(), "voe");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    if (uni == 0)
        throw std::invalid_argument("voe: both masks empty");
    return 100.0 * (1.0 - static_cast<double>(inter) / static_cast<double>(uni));
}

double rvd(const LabelMask& a, const LabelMask& b)
{
    require_same_shape(a.dims(), b.dims(), "rvd");
    auto na = count_foreground(a);
    auto nb = count_foreground(b);
    if (nb == 0)
        throw std::invalid_argument("rvd: empty reference mask");
    return 100.0 * (static_cast<double>(na) - static_cast<double>(nb)) /
           static_cast<double>(nb);
}

SurfaceDistances surface_distances(const LabelMask& a, const LabelMask& b)
{
    require_same_shape(a.dims(), b.dims(), "surface_distances");
    auto ba = border_voxels(a);
    auto bb = border_voxels(b);
    if (ba.empty() || bb.empty())
        throw std::invalid_argument("surface_distances: empty mask");

    auto da = distance_transform(a.dims(), a.spacing(), bb);  // distances to B's border
    auto db = distance_transform(a.dims(), a.spacing(), ba);

    double sum = 0.0, sum2 = 0.0, max2 = 0.0;
    for (auto i : ba) {
        sum += std::sqrt(da[i]);
        sum2 += da[i];
        max2 = std::max(max2, da[i]);
    }
    for (auto i : bb) {
        sum += std::sqrt(db[i]);
        sum2 += db[i];
        max2 = std::max(max2, db[i]);
    }
    double n = static_cast<double>(ba.size() + bb.size());
    return {sum / n, std::sqrt(sum2 / n), std::sqrt(max2)};
}

std::array<double, 5> sliver_scores(double voe_pct, double rvd_pct,
                                    const SurfaceDistances& dist)
{
    const std::array<double, 5> refs{6.4, 4.7, 1.0, 1.8, 19.0};
    const std::array<double, 5> vals{voe_pct, std::abs(rvd_pct), dist.asd, dist.rmsd,
                                     dist.msd};
    std::array<double, 5> scores{};
    for (int i = 0; i < 5; ++i)
        scores[i] = std::max(0.0, 100.0 - 25.0 * vals[i] / refs[i]);
    return scores;
}

MetricReport evaluate_masks(const LabelMask& result, const LabelMask& reference)
{
    MetricReport r;
    r.voe = voe(result, reference);
    r.rvd = rvd(result, reference);
    r.dist = surface_distances(result, reference);
    r.scores = sliver_scores(r.voe, r.rvd, r.dist);
    r.total_score = 0.0;
    for (double s : r.scores)
        r.total_score += s;
    r.total_score /= 5.0;
    return r;
}

double mask_volume_ml(const LabelMask& mask)
{
    return static_cast<double>(count_foreground(mask)) * mask.voxel_volume_mm3() / 1000.0;
}

VolumeStats volume_stats(const std::vector<std::pair<double, double>>& pairs)
{
    const auto n = pairs.size();
    if (n < 3)
        throw std::invalid_argument("volume_stats: need at least 3 pairs");

    double mean_a = 0.0, mean_m = 0.0;
    for (auto [a, m] : pairs) {
        mean_a += a;
        mean_m += m;
    }
    mean_a /= static_cast<double>(n);
    mean_m /= static_cast<double>(n);

    double cov = 0.0, var_a = 0.0, var_m = 0.0;
    for (auto [a, m] : pairs) {
        cov += (a - mean_a) * (m - mean_m);
        var_a += (a - mean_a) * (a - mean_a);
        var_m += (m - mean_m) * (m - mean_m);
    }
    if (var_m <= 0.0 || var_a <= 0.0)
        throw std::invalid_argument("volume_stats: degenerate variance");

    VolumeStats s;
    s.slope = cov / var_m;
    s.intercept = mean_a - s.slope * mean_m;
    s.correlation = cov / std::sqrt(var_a * var_m);

    double mean_d = mean_a - mean_m;
    double ssd = 0.0;
    for (auto [a, m] : pairs) {
        double d = (a - m) - mean_d;
        ssd += d * d;
    }
    double sd = std::sqrt(ssd / static_cast<double>(n - 1));
    s.mean_difference = mean_d;
    s.loa_low = mean_d - 1.96 * sd;
    s.loa_high = mean_d + 1.96 * sd;
    // Pooled mean of all automatic and manual volumes.
    s.cv_percent = 100.0 * sd / (0.5 * (mean_a + mean_m));
    return s;
}

}  // namespace liverseg
