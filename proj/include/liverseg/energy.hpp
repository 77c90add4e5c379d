#pragma once

// Segmentation energy: intensity thresholding map, contrast boundary
// weights, the neighbor-weighted region score, the per-voxel data term, the
// total labeling energy and the equivalent s-t graph.

#include "liverseg/features.hpp"
#include "liverseg/grid.hpp"
#include "liverseg/maxflow.hpp"
#include "liverseg/probmap.hpp"

namespace liverseg {

// Sign convention for the region-score bracket. `literal` evaluates
// f + (L - 0.5) + gamma*P as written; `corrected` flips the thresholding and
// appearance terms to -f + (L - 0.5) - gamma*P so that in-range intensity,
// high likelihood and reference-like appearance all push the score toward
// the object.
enum class SignMode { literal, corrected };

struct EnergyParams {
    double lambda = 70.0;  // data-vs-boundary balance
    double beta = 0.2;     // boundary contrast
    double gamma = 0.0;    // appearance trade-off; see default_gamma()
    LbpParams lbp;
    Dims3 window{9, 9, 5};  // local appearance window, 5 through-plane
    double likelihood_threshold = 0.5;
    SignMode sign_mode = SignMode::corrected;
    VarianceMode variance_mode = VarianceMode::variance;

    void validate() const
    {
        if (!(lambda > 0.0))
            throw std::invalid_argument("EnergyParams: lambda must be positive");
        if (!(beta > 0.0))
            throw std::invalid_argument("EnergyParams: beta must be positive");
        if (gamma < 0.0)
            throw std::invalid_argument("EnergyParams: gamma must be non-negative");
        lbp.validate();
    }
};

// Default appearance trade-off: sum of the reference feature variances / 36.
double default_gamma(const FeatureHistogramModel& model);

// f(x) = (I - zeta)(I - eta) / (eta - zeta)^2, unclamped.
Grid3<float> threshold_map(const Volume& vol, const IntensityRange& range);

// B_xy = 1 / (1 + beta |i1 - i2|^2).
double boundary_weight(double i1, double i2, double beta);

// R(x) = sum_{y in N_x} B_xy * bracket(x), 6-connected; the appearance grid
// may be empty when gamma is zero.
Grid3<float> region_score(const Volume& vol, const Grid3<float>& f,
                          const ProbabilityMap& likelihood,
                          const Grid3<float>& appearance, const EnergyParams& params);

// D_x(l) = max(-R,0)*l + max(R,0)*(1-l).
double data_term(double r_value, int label);

// lambda * sum_x D_x(l_x) + sum over unordered 6-neighbor pairs of
// B_xy * [l_x != l_y].
double total_energy(const Volume& vol, const LabelMask& labels,
                    const Grid3<float>& r, const EnergyParams& params);

// t-links e_sx = lambda*max(R,0), e_xt = lambda*max(-R,0); n-links B_xy on
// unordered 6-neighbor pairs. The cut cost of any labeling equals
// total_energy of that labeling.
GridGraph build_graph(const Grid3<float>& r, const Volume& vol,
                      const EnergyParams& params);

}  // namespace liverseg
