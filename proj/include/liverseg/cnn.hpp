#pragma once

// Minimal 3D CNN forward engine with just enough backpropagation for a
// finite-difference gradient check. Tensors are dense 4D (x, y, z, channel)
// with channel fastest.

#include <cstdint>
#include <string>
#include <vector>

#include "liverseg/grid.hpp"

namespace liverseg {

using Dims4 = std::array<int, 4>;  // x, y, z, channels

class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Dims4 dims, double fill = 0.0) : dims_(dims)
    {
        for (int a = 0; a < 4; ++a)
            if (dims_[a] <= 0)
                throw std::invalid_argument("Tensor4: dims must be positive");
        data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] * dims_[3],
                     fill);
    }

    const Dims4& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int x, int y, int z, int c) const
    {
        return ((static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x) * dims_[3] + c;
    }
    double& at(int x, int y, int z, int c) { return data_[index(x, y, z, c)]; }
    const double& at(int x, int y, int z, int c) const { return data_[index(x, y, z, c)]; }

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    Dims4 dims_{0, 0, 0, 0};
    std::vector<double> data_;
};

enum class LayerKind { conv, mean_pool, lrn, relu, rearrange, logistic };

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    // conv
    std::array<int, 3> filter{1, 1, 1};
    int out_channels = 1;
    // conv + mean_pool
    std::array<int, 3> stride{1, 1, 1};
    std::array<int, 3> pad{0, 0, 0};
    // mean_pool window
    std::array<int, 3> pool{1, 1, 1};
    // lrn
    int lrn_depth = 5;
    double lrn_k = 2.0;
    double lrn_alpha = 1e-4;
    double lrn_beta = 0.75;
};

struct ConvWeights {
    // weights[(((oc*in_c + ic)*kz + z)*ky + y)*kx + x], biases[oc]
    std::vector<double> weights;
    std::vector<double> biases;
};

struct NetworkSpec {
    Dims4 input_dims{1, 1, 1, 1};
    std::vector<LayerSpec> layers;
    std::vector<ConvWeights> conv_weights;  // one entry per conv layer, in order

    std::size_t parameter_count() const;
};

// Cross-correlation over input channels plus bias; zero padding; output
// spatial extent floor((in + 2*pad - k)/stride) + 1 per axis.
Tensor4 conv3d(const Tensor4& input, const LayerSpec& spec, const ConvWeights& w);

// Mean over the pool window, averaging only samples inside the input (the
// zero-padded margin does not enter the denominator, so constants are
// preserved at borders).
Tensor4 mean_pool(const Tensor4& input, const LayerSpec& spec);

// Across-channel local response normalization
// b = a / (k + alpha * sum_{c' in depth window} a_{c'}^2)^beta.
Tensor4 lrn(const Tensor4& input, const LayerSpec& spec);

Tensor4 relu(const Tensor4& input);

// Channel-to-space pixel shuffle: 8 channels become a 2x2x2 spatial block in
// z-major channel order (offset index o = 4*dz + 2*dy + dx); spatial dims
// double, channels divide by 8.
Tensor4 rearrange_double(const Tensor4& input);

Tensor4 logistic(const Tensor4& input);

// Per-layer output shapes without running the network.
std::vector<Dims4> infer_shapes(const NetworkSpec& net);

Tensor4 forward(const NetworkSpec& net, const Tensor4& input);

// Architecture with the canonical 249x249x279x1 input and its 16-row shape
// trace; row_ends[i] is the layer index whose output closes row i.
struct NetworkArchitecture {
    NetworkSpec net;
    std::vector<int> row_ends;
    std::vector<Dims4> row_shapes;
};
NetworkArchitecture full_architecture();

// Same layer kinds at toy scale, for running forward end to end.
NetworkArchitecture scaled_architecture(int channel_scale = 16);

void fill_random_weights(NetworkSpec& net, std::uint64_t seed, double scale = 0.05);

// Binary little-endian weight file: "LSCW" magic + version, then per conv
// layer "CONV", kx ky kz in_c out_c (int32) followed by float32 weights and
// biases.
void save_weights(const NetworkSpec& net, const std::string& path);
void load_weights(NetworkSpec& net, const std::string& path);

// Mean binary cross-entropy of Eq-style logistic predictions plus
// decay/2 * ||params||^2; predictions are clamped to [eps, 1-eps].
double logistic_loss(const std::vector<double>& predictions,
                     const std::vector<double>& targets, double decay,
                     const std::vector<double>& decay_params);

// Analytic parameter gradients of logistic_loss(forward(net, input), targets)
// via backpropagation. The final layer must be logistic; weight decay is
// applied to the last conv layer's parameters.
std::vector<ConvWeights> backward(const NetworkSpec& net, const Tensor4& input,
                                  const std::vector<double>& targets, double decay);

// Max relative error between analytic and central finite-difference
// gradients (h = 1e-4) over all parameters.
double gradient_check(const NetworkSpec& net, const Tensor4& input,
                      const std::vector<double>& targets, double decay = 0.0);

}  // namespace liverseg
