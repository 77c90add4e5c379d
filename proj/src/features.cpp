#include "liverseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include "liverseg/parallel.hpp"
#include "liverseg/volume_ops.hpp"

namespace liverseg {
namespace {

int heaviside_positive(double t)
{
    return t > 0.0 ? 1 : 0;
}

double sign(double t)
{
    return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
}

std::vector<double> neighbor_values(const Volume& vol,
                                    const std::vector<std::array<double, 3>>& offsets,
                                    int x, int y, int z)
{
    std::vector<double> vals(offsets.size());
    for (std::size_t i = 0; i < offsets.size(); ++i)
        vals[i] = sample_trilinear(vol, x + offsets[i][0], y + offsets[i][1],
                                   z + offsets[i][2]);
    return vals;
}

}  // namespace

std::vector<std::array<double, 3>> lbp_neighbor_offsets(const LbpParams& params)
{
    params.validate();
    if (params.p == 6 && params.r == 1.0) {
        return {{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    }
    // Spherical Fibonacci directions scaled by r.
    std::vector<std::array<double, 3>> offsets(params.p);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < params.p; ++k) {
        double zc = 1.0 - 2.0 * (k + 0.5) / params.p;
        double rho = std::sqrt(std::max(0.0, 1.0 - zc * zc));
        double theta = golden * k;
        offsets[k] = {params.r * rho * std::cos(theta), params.r * rho * std::sin(theta),
                      params.r * zc};
    }
    return offsets;
}

Grid3<std::int32_t> lbp3d(const Volume& vol, const LbpParams& params)
{
    auto offsets = lbp_neighbor_offsets(params);
    Grid3<std::int32_t> codes(vol.dims(), vol.spacing());
    const auto& d = vol.dims();
    parallel_for(0, d[2], [&](int z) {
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                double center = vol.at(x, y, z);
                std::int32_t code = 0;
                for (std::size_t p = 0; p < offsets.size(); ++p) {
                    double np = sample_trilinear(vol, x + offsets[p][0], y + offsets[p][1],
                                                 z + offsets[p][2]);
                    double diff = np - center;
                    if (heaviside_positive(diff - params.tau * sign(diff)))
                        code |= std::int32_t{1} << p;
                }
                codes.at(x, y, z) = code;
            }
    });
    return codes;
}

Grid3<float> var3d(const Volume& vol, const LbpParams& params)
{
    auto offsets = lbp_neighbor_offsets(params);
    Grid3<float> out(vol.dims(), vol.spacing());
    const auto& d = vol.dims();
    parallel_for(0, d[2], [&](int z) {
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                auto vals = neighbor_values(vol, offsets, x, y, z);
                double mean = 0.0;
                for (double v : vals)
                    mean += v;
                mean /= static_cast<double>(vals.size());
                double var = 0.0;
                for (double v : vals)
                    var += (v - mean) * (v - mean);
                out.at(x, y, z) = static_cast<float>(var / static_cast<double>(vals.size()));
            }
    });
    return out;
}

CumulativeHistogram cumulative_histogram(const std::vector<double>& values,
                                         double lo, double hi, int bins)
{
    if (values.empty())
        throw std::invalid_argument("cumulative_histogram: empty input");
    if (!(lo < hi))
        throw std::invalid_argument("cumulative_histogram: invalid range");
    if (bins < 2)
        throw std::invalid_argument("cumulative_histogram: bins must be >= 2");

    std::vector<std::size_t> counts(bins, 0);
    const double inv_w = bins / (hi - lo);
    for (double v : values) {
        int b = static_cast<int>((std::clamp(v, lo, hi) - lo) * inv_w);
        counts[std::clamp(b, 0, bins - 1)]++;
    }
    CumulativeHistogram h{lo, hi, std::vector<double>(bins)};
    std::size_t acc = 0;
    for (int b = 0; b < bins; ++b) {
        acc += counts[b];
        h.cum[b] = static_cast<double>(acc) / static_cast<double>(values.size());
    }
    return h;
}

double wasserstein_l1(const CumulativeHistogram& h1, const CumulativeHistogram& h2)
{
    if (h1.bins() != h2.bins() || std::abs(h1.lo - h2.lo) > 1e-9 ||
        std::abs(h1.hi - h2.hi) > 1e-9)
        throw std::invalid_argument("wasserstein_l1: mismatched binning");
    double sum = 0.0;
    for (int b = 0; b < h1.bins(); ++b)
        sum += std::abs(h1.cum[b] - h2.cum[b]);
    return sum * h1.bin_width();
}

JointFeatureVolume compute_features(const Volume& vol, const LbpParams& params)
{
    return {vol, lbp3d(vol, params), var3d(vol, params)};
}

FeatureHistogramModel fit_reference_model(const JointFeatureVolume& features,
                                          const LabelMask& l0, int bins,
                                          const LbpParams& params)
{
    require_same_shape(features.intensity.dims(), l0.dims(), "fit_reference_model");
    require_same_shape(features.lbp.dims(), l0.dims(), "fit_reference_model");
    require_same_shape(features.var.dims(), l0.dims(), "fit_reference_model");

    std::array<std::vector<double>, 3> vals;
    for (std::size_t i = 0; i < l0.size(); ++i) {
        if (!l0[i])
            continue;
        vals[0].push_back(features.intensity[i]);
        vals[1].push_back(features.lbp[i]);
        vals[2].push_back(features.var[i]);
    }
    if (vals[0].empty())
        throw std::invalid_argument("fit_reference_model: empty L0");

    FeatureHistogramModel model;
    for (int f = 0; f < FeatureHistogramModel::kFeatures; ++f) {
        double mean = 0.0;
        for (double v : vals[f])
            mean += v;
        mean /= static_cast<double>(vals[f].size());
        double var = 0.0;
        for (double v : vals[f])
            var += (v - mean) * (v - mean);
        var /= static_cast<double>(vals[f].size());
        model.variance[f] = var;
        if (var <= 0.0) {
            model.enabled[f] = false;
            std::cerr << "fit_reference_model: feature " << f
                      << " has zero variance; its appearance term is disabled\n";
        }

        double lo, hi;
        int fbins;
        if (f == 1) {
            // LBP codes bin their integer range directly: bin b holds code b.
            lo = 0.0;
            hi = static_cast<double>(std::int64_t{1} << params.p);
            fbins = 1 << params.p;
        } else {
            auto [mn, mx] = std::minmax_element(vals[f].begin(), vals[f].end());
            double pad = std::max((*mx - *mn) * 0.01, 1e-9);
            lo = *mn - pad;
            hi = *mx + pad;
            fbins = bins;
        }
        model.reference[f] = cumulative_histogram(vals[f], lo, hi, fbins);
    }
    return model;
}

Grid3<float> appearance_map(const JointFeatureVolume& features,
                            const FeatureHistogramModel& model,
                            Dims3 window, VarianceMode mode)
{
    const auto& d = features.intensity.dims();
    for (int a = 0; a < 3; ++a) {
        if (window[a] <= 0 || window[a] % 2 == 0)
            throw std::invalid_argument("appearance_map: window dims must be odd and positive");
        if (window[a] > d[a])
            throw std::invalid_argument("appearance_map: window larger than volume");
    }

    constexpr int kF = FeatureHistogramModel::kFeatures;
    std::array<double, kF> denom{};
    for (int f = 0; f < kF; ++f)
        denom[f] = mode == VarianceMode::variance ? model.variance[f]
                                                  : model.variance[f] * model.variance[f];

    // Precompute per-voxel bin indices once; the sliding window then only
    // moves integer counts.
    std::array<std::vector<std::uint16_t>, kF> binidx;
    std::array<int, kF> nbins{};
    for (int f = 0; f < kF; ++f) {
        if (!model.enabled[f])
            continue;
        const auto& ref = model.reference[f];
        nbins[f] = ref.bins();
        binidx[f].resize(features.intensity.size());
        const double inv_w = nbins[f] / (ref.hi - ref.lo);
        for (std::size_t i = 0; i < features.intensity.size(); ++i) {
            double v = f == 0 ? features.intensity[i]
                              : (f == 1 ? static_cast<double>(features.lbp[i])
                                        : features.var[i]);
            int b = static_cast<int>((std::clamp(v, ref.lo, ref.hi) - ref.lo) * inv_w);
            binidx[f][i] = static_cast<std::uint16_t>(std::clamp(b, 0, nbins[f] - 1));
        }
    }

    Grid3<float> out(d, features.intensity.spacing());
    const int wx = window[0] / 2, wy = window[1] / 2, wz = window[2] / 2;

    parallel_for(0, d[2] * d[1], [&](int row) {
        const int z = row / d[1];
        const int y = row % d[1];
        const int y0 = std::max(0, y - wy), y1 = std::min(d[1] - 1, y + wy);
        const int z0 = std::max(0, z - wz), z1 = std::min(d[2] - 1, z + wz);

        std::array<std::vector<std::int32_t>, kF> counts;
        for (int f = 0; f < kF; ++f)
            if (model.enabled[f])
                counts[f].assign(nbins[f], 0);
        std::int64_t total = 0;

        auto add_column = [&](int cx, int sgn) {
            for (int zz = z0; zz <= z1; ++zz)
                for (int yy = y0; yy <= y1; ++yy) {
                    std::size_t i = features.intensity.index(cx, yy, zz);
                    for (int f = 0; f < kF; ++f)
                        if (model.enabled[f])
                            counts[f][binidx[f][i]] += sgn;
                }
            total += static_cast<std::int64_t>(sgn) * (z1 - z0 + 1) * (y1 - y0 + 1);
        };

        for (int cx = 0; cx <= std::min(wx, d[0] - 1); ++cx)
            add_column(cx, +1);

        for (int x = 0; x < d[0]; ++x) {
            double score = 0.0;
            for (int f = 0; f < kF; ++f) {
                if (!model.enabled[f])
                    continue;
                const auto& ref = model.reference[f];
                const double inv_total = 1.0 / static_cast<double>(total);
                double w1 = 0.0;
                std::int64_t acc = 0;
                for (int b = 0; b < nbins[f]; ++b) {
                    acc += counts[f][b];
                    w1 += std::abs(acc * inv_total - ref.cum[b]);
                }
                score += w1 * ref.bin_width() / denom[f];
            }
            out.at(x, y, z) = static_cast<float>(score);

            if (x - wx >= 0)
                add_column(x - wx, -1);
            if (x + wx + 1 < d[0])
                add_column(x + wx + 1, +1);
        }
    });
    return out;
}

void FeatureHistogramModel::save(const std::string& path) const
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write model: " + path);
    out.precision(17);
    out << "features " << kFeatures << "\n";
    for (int f = 0; f < kFeatures; ++f) {
        out << "feature " << f << " enabled " << (enabled[f] ? 1 : 0) << " variance "
            << variance[f] << " lo " << reference[f].lo << " hi " << reference[f].hi
            << " bins " << reference[f].bins() << "\n";
        for (double c : reference[f].cum)
            out << c << ' ';
        out << "\n";
    }
    if (!out)
        throw std::runtime_error("model write failure: " + path);
}

FeatureHistogramModel FeatureHistogramModel::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open model: " + path);
    std::string tok;
    int nfeat = 0;
    if (!(in >> tok >> nfeat) || tok != "features" || nfeat != kFeatures)
        throw std::runtime_error(path + ": malformed model header");
    FeatureHistogramModel model;
    for (int f = 0; f < kFeatures; ++f) {
        int idx = 0, en = 0, bins = 0;
        std::string t1, t2, t3, t4, t5, t6;
        if (!(in >> t1 >> idx >> t2 >> en >> t3 >> model.variance[f] >> t4 >>
              model.reference[f].lo >> t5 >> model.reference[f].hi >> t6 >> bins) ||
            t1 != "feature" || idx != f || bins < 1)
            throw std::runtime_error(path + ": malformed model feature block");
        model.enabled[f] = en != 0;
        model.reference[f].cum.resize(bins);
        for (int b = 0; b < bins; ++b)
            if (!(in >> model.reference[f].cum[b]))
                throw std::runtime_error(path + ": truncated model histogram");
    }
    return model;
}

}  // namespace liverseg
