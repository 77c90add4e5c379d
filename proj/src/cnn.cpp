#include "liverseg/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "liverseg/parallel.hpp"

namespace liverseg {
namespace {

int conv_out_extent(int in, int k, int pad, int stride, const char* what)
{
    int out = (in + 2 * pad - k) / stride + 1;
    if (in + 2 * pad < k || out <= 0)
        throw std::invalid_argument(std::string(what) + ": filter larger than padded input");
    return out;
}

std::size_t conv_weight_count(const LayerSpec& s, int in_c)
{
    return static_cast<std::size_t>(s.filter[0]) * s.filter[1] * s.filter[2] * in_c *
           s.out_channels;
}

std::size_t weight_index(const LayerSpec& s, int in_c, int oc, int ic, int kx, int ky,
                         int kz)
{
    (void)in_c;
    return (((static_cast<std::size_t>(oc) * in_c + ic) * s.filter[2] + kz) * s.filter[1] +
            ky) * s.filter[0] + kx;
}

}  // namespace

std::size_t NetworkSpec::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& w : conv_weights)
        n += w.weights.size() + w.biases.size();
    return n;
}

Tensor4 conv3d(const Tensor4& input, const LayerSpec& spec, const ConvWeights& w)
{
    const auto& d = input.dims();
    const int in_c = d[3];
    Dims4 od{conv_out_extent(d[0], spec.filter[0], spec.pad[0], spec.stride[0], "conv3d"),
             conv_out_extent(d[1], spec.filter[1], spec.pad[1], spec.stride[1], "conv3d"),
             conv_out_extent(d[2], spec.filter[2], spec.pad[2], spec.stride[2], "conv3d"),
             spec.out_channels};
    if (w.weights.size() != conv_weight_count(spec, in_c) ||
        w.biases.size() != static_cast<std::size_t>(spec.out_channels))
        throw std::invalid_argument("conv3d: weight tensor size mismatch");

    Tensor4 out(od);
    parallel_for(0, od[2], [&](int oz) {
        for (int oy = 0; oy < od[1]; ++oy)
            for (int ox = 0; ox < od[0]; ++ox) {
                const int x0 = ox * spec.stride[0] - spec.pad[0];
                const int y0 = oy * spec.stride[1] - spec.pad[1];
                const int z0 = oz * spec.stride[2] - spec.pad[2];
                for (int oc = 0; oc < od[3]; ++oc) {
                    double acc = w.biases[oc];
                    for (int kz = 0; kz < spec.filter[2]; ++kz) {
                        int z = z0 + kz;
                        if (z < 0 || z >= d[2])
                            continue;
                        for (int ky = 0; ky < spec.filter[1]; ++ky) {
                            int y = y0 + ky;
                            if (y < 0 || y >= d[1])
                                continue;
                            for (int kx = 0; kx < spec.filter[0]; ++kx) {
                                int x = x0 + kx;
                                if (x < 0 || x >= d[0])
                                    continue;
                                for (int ic = 0; ic < in_c; ++ic)
                                    acc += input.at(x, y, z, ic) *
                                           w.weights[weight_index(spec, in_c, oc, ic, kx,
                                                                  ky, kz)];
                            }
                        }
                    }
                    out.at(ox, oy, oz, oc) = acc;
                }
            }
    });
    return out;
}

Tensor4 mean_pool(const Tensor4& input, const LayerSpec& spec)
{
    const auto& d = input.dims();
    Dims4 od{conv_out_extent(d[0], spec.pool[0], spec.pad[0], spec.stride[0], "mean_pool"),
             conv_out_extent(d[1], spec.pool[1], spec.pad[1], spec.stride[1], "mean_pool"),
             conv_out_extent(d[2], spec.pool[2], spec.pad[2], spec.stride[2], "mean_pool"),
             d[3]};
    Tensor4 out(od);
    parallel_for(0, od[2], [&](int oz) {
        for (int oy = 0; oy < od[1]; ++oy)
            for (int ox = 0; ox < od[0]; ++ox) {
                const int x0 = ox * spec.stride[0] - spec.pad[0];
                const int y0 = oy * spec.stride[1] - spec.pad[1];
                const int z0 = oz * spec.stride[2] - spec.pad[2];
                int xa = std::max(0, x0), xb = std::min(d[0], x0 + spec.pool[0]);
                int ya = std::max(0, y0), yb = std::min(d[1], y0 + spec.pool[1]);
                int za = std::max(0, z0), zb = std::min(d[2], z0 + spec.pool[2]);
                int count = std::max(0, xb - xa) * std::max(0, yb - ya) *
                            std::max(0, zb - za);
                for (int c = 0; c < d[3]; ++c) {
                    double acc = 0.0;
                    for (int z = za; z < zb; ++z)
                        for (int y = ya; y < yb; ++y)
                            for (int x = xa; x < xb; ++x)
                                acc += input.at(x, y, z, c);
                    out.at(ox, oy, oz, c) = count > 0 ? acc / count : 0.0;
                }
            }
    });
    return out;
}

Tensor4 lrn(const Tensor4& input, const LayerSpec& spec)
{
    if (spec.lrn_depth % 2 == 0)
        throw std::invalid_argument("lrn: depth must be odd");
    const auto& d = input.dims();
    const int half = spec.lrn_depth / 2;
    Tensor4 out(d);
    parallel_for(0, d[2], [&](int z) {
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                for (int c = 0; c < d[3]; ++c) {
                    double s = 0.0;
                    for (int cc = std::max(0, c - half);
                         cc <= std::min(d[3] - 1, c + half); ++cc) {
                        double a = input.at(x, y, z, cc);
                        s += a * a;
                    }
                    out.at(x, y, z, c) =
                        input.at(x, y, z, c) /
                        std::pow(spec.lrn_k + spec.lrn_alpha * s, spec.lrn_beta);
                }
    });
    return out;
}

Tensor4 relu(const Tensor4& input)
{
    Tensor4 out(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

Tensor4 rearrange_double(const Tensor4& input)
{
    const auto& d = input.dims();
    if (d[3] % 8 != 0)
        throw std::invalid_argument("rearrange_double: channels must be divisible by 8");
    Tensor4 out({d[0] * 2, d[1] * 2, d[2] * 2, d[3] / 8});
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                for (int c = 0; c < d[3] / 8; ++c)
                    for (int o = 0; o < 8; ++o) {
                        int dx = o & 1, dy = (o >> 1) & 1, dz = (o >> 2) & 1;
                        out.at(2 * x + dx, 2 * y + dy, 2 * z + dz, c) =
                            input.at(x, y, z, c * 8 + o);
                    }
    return out;
}

Tensor4 logistic(const Tensor4& input)
{
    Tensor4 out(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-input[i]));
    return out;
}

std::vector<Dims4> infer_shapes(const NetworkSpec& net)
{
    std::vector<Dims4> shapes;
    Dims4 d = net.input_dims;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& s = net.layers[li];
        try {
            switch (s.kind) {
            case LayerKind::conv:
                d = {conv_out_extent(d[0], s.filter[0], s.pad[0], s.stride[0], "conv"),
                     conv_out_extent(d[1], s.filter[1], s.pad[1], s.stride[1], "conv"),
                     conv_out_extent(d[2], s.filter[2], s.pad[2], s.stride[2], "conv"),
                     s.out_channels};
                break;
            case LayerKind::mean_pool:
                d = {conv_out_extent(d[0], s.pool[0], s.pad[0], s.stride[0], "pool"),
                     conv_out_extent(d[1], s.pool[1], s.pad[1], s.stride[1], "pool"),
                     conv_out_extent(d[2], s.pool[2], s.pad[2], s.stride[2], "pool"),
                     d[3]};
                break;
            case LayerKind::rearrange:
                if (d[3] % 8 != 0)
                    throw std::invalid_argument("channels not divisible by 8");
                d = {d[0] * 2, d[1] * 2, d[2] * 2, d[3] / 8};
                break;
            case LayerKind::lrn:
            case LayerKind::relu:
            case LayerKind::logistic:
                break;
            }
        } catch (const std::exception& e) {
            throw std::invalid_argument("layer " + std::to_string(li) +
                                        " shape mismatch: " + e.what());
        }
        shapes.push_back(d);
    }
    return shapes;
}

Tensor4 forward(const NetworkSpec& net, const Tensor4& input)
{
    if (input.dims() != net.input_dims)
        throw std::invalid_argument("forward: input dims do not match network spec");

    Tensor4 cur = input;
    std::size_t conv_idx = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& s = net.layers[li];
        try {
            switch (s.kind) {
            case LayerKind::conv:
                if (conv_idx >= net.conv_weights.size())
                    throw std::invalid_argument("missing conv weights");
                cur = conv3d(cur, s, net.conv_weights[conv_idx++]);
                break;
            case LayerKind::mean_pool: cur = mean_pool(cur, s); break;
            case LayerKind::lrn: cur = lrn(cur, s); break;
            case LayerKind::relu: cur = relu(cur); break;
            case LayerKind::rearrange: cur = rearrange_double(cur); break;
            case LayerKind::logistic: cur = logistic(cur); break;
            }
        } catch (const std::exception& e) {
            throw std::invalid_argument("layer " + std::to_string(li) + ": " + e.what());
        }
    }
    return cur;
}

namespace {

LayerSpec make_conv(std::array<int, 3> filter, int out_c, std::array<int, 3> stride,
                    std::array<int, 3> pad)
{
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.filter = filter;
    s.out_channels = out_c;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec make_pool(std::array<int, 3> pool, std::array<int, 3> pad)
{
    LayerSpec s;
    s.kind = LayerKind::mean_pool;
    s.pool = pool;
    s.stride = {2, 2, 2};
    s.pad = pad;
    return s;
}

LayerSpec make_plain(LayerKind kind)
{
    LayerSpec s;
    s.kind = kind;
    return s;
}

NetworkArchitecture build_architecture(Dims4 input, int c1, int c2, int c3)
{
    // c1/c2/c3 are the three channel widths (96/256/512 at full scale).
    NetworkArchitecture arch;
    auto& net = arch.net;
    net.input_dims = input;
    auto conv_relu = [&](std::array<int, 3> f, int oc, std::array<int, 3> st,
                         std::array<int, 3> pad) {
        net.layers.push_back(make_conv(f, oc, st, pad));
        net.layers.push_back(make_plain(LayerKind::relu));
    };

    // The z padding of the early rows is zero, so those rows trim only the
    // through-plane extent; all per-layer geometry is explicit rather than
    // derived from one global rule.
    conv_relu({7, 7, 9}, c1, {2, 2, 2}, {3, 3, 0});
    net.layers.push_back(make_plain(LayerKind::lrn));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    net.layers.push_back(make_pool({3, 3, 2}, {1, 1, 0}));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    conv_relu({5, 5, 5}, c2, {1, 1, 1}, {2, 2, 0});
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    net.layers.push_back(make_pool({3, 3, 2}, {0, 0, 0}));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    for (int i = 0; i < 5; ++i) {
        conv_relu({3, 3, 3}, c3, {1, 1, 1}, {1, 1, 1});
        arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);
    }

    net.layers.push_back(make_plain(LayerKind::rearrange));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    conv_relu({3, 3, 3}, c3, {1, 1, 1}, {1, 1, 1});
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    net.layers.push_back(make_plain(LayerKind::rearrange));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    conv_relu({3, 3, 3}, c3 / 4, {1, 1, 1}, {1, 1, 1});
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    net.layers.push_back(make_plain(LayerKind::rearrange));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    conv_relu({3, 3, 3}, c3 / 32, {1, 1, 1}, {1, 1, 1});
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    net.layers.push_back(make_conv({3, 3, 3}, 1, {1, 1, 1}, {1, 1, 1}));
    net.layers.push_back(make_plain(LayerKind::logistic));
    arch.row_ends.push_back(static_cast<int>(net.layers.size()) - 1);

    auto shapes = infer_shapes(net);
    for (int e : arch.row_ends)
        arch.row_shapes.push_back(shapes[e]);
    return arch;
}

}  // namespace

NetworkArchitecture full_architecture()
{
    return build_architecture({249, 249, 279, 1}, 96, 256, 512);
}

NetworkArchitecture scaled_architecture(int channel_scale)
{
    if (channel_scale <= 0 || 96 % channel_scale != 0 || 512 % (channel_scale * 32) != 0)
        throw std::invalid_argument("scaled_architecture: invalid channel scale");
    return build_architecture({33, 33, 39, 1}, 96 / channel_scale, 256 / channel_scale,
                              512 / channel_scale);
}

void fill_random_weights(NetworkSpec& net, std::uint64_t seed, double scale)
{
    std::mt19937_64 rng(seed);
    // scale 0 is allowed and produces all-zero parameters.
    std::normal_distribution<double> dist(0.0, scale > 0.0 ? scale : 1.0);
    auto draw = [&] { return scale > 0.0 ? dist(rng) : 0.0; };

    net.conv_weights.clear();
    Dims4 d = net.input_dims;
    auto shapes = infer_shapes(net);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& s = net.layers[li];
        if (s.kind == LayerKind::conv) {
            ConvWeights w;
            w.weights.resize(conv_weight_count(s, d[3]));
            w.biases.resize(s.out_channels);
            for (auto& v : w.weights)
                v = draw();
            for (auto& v : w.biases)
                v = draw();
            net.conv_weights.push_back(std::move(w));
        }
        d = shapes[li];
    }
}

namespace {

constexpr char kWeightMagic[4] = {'L', 'S', 'C', 'W'};
constexpr std::int32_t kWeightVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v, const std::string& path)
{
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw std::runtime_error(path + ": truncated weight file");
}

}  // namespace

void save_weights(const NetworkSpec& net, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write weights: " + path);
    out.write(kWeightMagic, 4);
    write_pod(out, kWeightVersion);
    write_pod(out, static_cast<std::int32_t>(net.conv_weights.size()));

    Dims4 d = net.input_dims;
    auto shapes = infer_shapes(net);
    std::size_t ci = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& s = net.layers[li];
        if (s.kind == LayerKind::conv) {
            const auto& w = net.conv_weights.at(ci++);
            out.write("CONV", 4);
            for (int v : {s.filter[0], s.filter[1], s.filter[2], d[3], s.out_channels})
                write_pod(out, static_cast<std::int32_t>(v));
            std::vector<float> buf(w.weights.begin(), w.weights.end());
            buf.insert(buf.end(), w.biases.begin(), w.biases.end());
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size() * sizeof(float)));
        }
        d = shapes[li];
    }
    if (!out)
        throw std::runtime_error("weight write failure: " + path);
}

void load_weights(NetworkSpec& net, const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open weights: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kWeightMagic, 4) != 0)
        throw std::runtime_error(path + ": not a weight file");
    std::int32_t version = 0, layer_count = 0;
    read_pod(in, version, path);
    read_pod(in, layer_count, path);
    if (version != kWeightVersion)
        throw std::runtime_error(path + ": unsupported weight file version");

    std::vector<ConvWeights> loaded;
    Dims4 d = net.input_dims;
    auto shapes = infer_shapes(net);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& s = net.layers[li];
        if (s.kind == LayerKind::conv) {
            char tag[4];
            in.read(tag, 4);
            if (!in || std::memcmp(tag, "CONV", 4) != 0)
                throw std::runtime_error(path + ": malformed conv block");
            std::int32_t fx, fy, fz, ic, oc;
            read_pod(in, fx, path);
            read_pod(in, fy, path);
            read_pod(in, fz, path);
            read_pod(in, ic, path);
            read_pod(in, oc, path);
            if (fx != s.filter[0] || fy != s.filter[1] || fz != s.filter[2] ||
                ic != d[3] || oc != s.out_channels)
                throw std::runtime_error(path + ": conv layer " +
                                         std::to_string(loaded.size()) +
                                         " geometry does not match the network spec");
            ConvWeights w;
            w.weights.resize(conv_weight_count(s, d[3]));
            w.biases.resize(s.out_channels);
            std::vector<float> buf(w.weights.size() + w.biases.size());
            in.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * sizeof(float)));
            std::copy(buf.begin(), buf.begin() + w.weights.size(), w.weights.begin());
            std::copy(buf.begin() + w.weights.size(), buf.end(), w.biases.begin());
            if (!in)
                throw std::runtime_error(path + ": truncated weight data");
            loaded.push_back(std::move(w));
        }
        d = shapes[li];
    }
    if (loaded.size() != static_cast<std::size_t>(layer_count))
        throw std::runtime_error(path + ": conv layer count mismatch");
    net.conv_weights = std::move(loaded);
}

double logistic_loss(const std::vector<double>& predictions,
                     const std::vector<double>& targets, double decay,
                     const std::vector<double>& decay_params)
{
    if (predictions.size() != targets.size() || predictions.empty())
        throw std::invalid_argument("logistic_loss: size mismatch or empty batch");
    constexpr double eps = 1e-12;
    double loss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double f = std::clamp(predictions[i], eps, 1.0 - eps);
        double y = targets[i];
        loss -= y * std::log(f) + (1.0 - y) * std::log(1.0 - f);
    }
    loss /= static_cast<double>(predictions.size());
    double reg = 0.0;
    for (double p : decay_params)
        reg += p * p;
    return loss + 0.5 * decay * reg;
}

namespace {

// Backward passes operate in double precision on float activations.
using Gradient = std::vector<double>;

Gradient conv3d_backward(const Tensor4& input, const LayerSpec& spec,
                         const ConvWeights& w, const Tensor4& grad_out,
                         Gradient& grad_w, Gradient& grad_b)
{
    const auto& d = input.dims();
    const auto& od = grad_out.dims();
    const int in_c = d[3];
    grad_w.assign(w.weights.size(), 0.0);
    grad_b.assign(w.biases.size(), 0.0);
    Gradient grad_in(input.size(), 0.0);

    for (int oz = 0; oz < od[2]; ++oz)
        for (int oy = 0; oy < od[1]; ++oy)
            for (int ox = 0; ox < od[0]; ++ox) {
                const int x0 = ox * spec.stride[0] - spec.pad[0];
                const int y0 = oy * spec.stride[1] - spec.pad[1];
                const int z0 = oz * spec.stride[2] - spec.pad[2];
                for (int oc = 0; oc < od[3]; ++oc) {
                    double g = grad_out.at(ox, oy, oz, oc);
                    if (g == 0.0)
                        continue;
                    grad_b[oc] += g;
                    for (int kz = 0; kz < spec.filter[2]; ++kz) {
                        int z = z0 + kz;
                        if (z < 0 || z >= d[2])
                            continue;
                        for (int ky = 0; ky < spec.filter[1]; ++ky) {
                            int y = y0 + ky;
                            if (y < 0 || y >= d[1])
                                continue;
                            for (int kx = 0; kx < spec.filter[0]; ++kx) {
                                int x = x0 + kx;
                                if (x < 0 || x >= d[0])
                                    continue;
                                for (int ic = 0; ic < in_c; ++ic) {
                                    auto wi = weight_index(spec, in_c, oc, ic, kx, ky, kz);
                                    grad_w[wi] += g * input.at(x, y, z, ic);
                                    grad_in[input.index(x, y, z, ic)] +=
                                        g * w.weights[wi];
                                }
                            }
                        }
                    }
                }
            }
    return grad_in;
}

Gradient mean_pool_backward(const Tensor4& input, const LayerSpec& spec,
                            const Tensor4& grad_out)
{
    const auto& d = input.dims();
    const auto& od = grad_out.dims();
    Gradient grad_in(input.size(), 0.0);
    for (int oz = 0; oz < od[2]; ++oz)
        for (int oy = 0; oy < od[1]; ++oy)
            for (int ox = 0; ox < od[0]; ++ox) {
                const int x0 = ox * spec.stride[0] - spec.pad[0];
                const int y0 = oy * spec.stride[1] - spec.pad[1];
                const int z0 = oz * spec.stride[2] - spec.pad[2];
                int xa = std::max(0, x0), xb = std::min(d[0], x0 + spec.pool[0]);
                int ya = std::max(0, y0), yb = std::min(d[1], y0 + spec.pool[1]);
                int za = std::max(0, z0), zb = std::min(d[2], z0 + spec.pool[2]);
                int count = std::max(0, xb - xa) * std::max(0, yb - ya) *
                            std::max(0, zb - za);
                if (count == 0)
                    continue;
                for (int c = 0; c < d[3]; ++c) {
                    double g = grad_out.at(ox, oy, oz, c) / count;
                    for (int z = za; z < zb; ++z)
                        for (int y = ya; y < yb; ++y)
                            for (int x = xa; x < xb; ++x)
                                grad_in[input.index(x, y, z, c)] += g;
                }
            }
    return grad_in;
}

Gradient lrn_backward(const Tensor4& input, const LayerSpec& spec,
                      const Tensor4& grad_out)
{
    const auto& d = input.dims();
    const int half = spec.lrn_depth / 2;
    Gradient grad_in(input.size(), 0.0);
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                for (int c = 0; c < d[3]; ++c) {
                    double s = 0.0;
                    for (int cc = std::max(0, c - half);
                         cc <= std::min(d[3] - 1, c + half); ++cc) {
                        double a = input.at(x, y, z, cc);
                        s += a * a;
                    }
                    double denom = spec.lrn_k + spec.lrn_alpha * s;
                    double g = grad_out.at(x, y, z, c);
                    double ac = input.at(x, y, z, c);
                    // d b_c / d a_d over the depth window.
                    grad_in[input.index(x, y, z, c)] += g * std::pow(denom, -spec.lrn_beta);
                    double common = -g * spec.lrn_beta * spec.lrn_alpha * 2.0 * ac *
                                    std::pow(denom, -spec.lrn_beta - 1.0);
                    for (int cc = std::max(0, c - half);
                         cc <= std::min(d[3] - 1, c + half); ++cc)
                        grad_in[input.index(x, y, z, cc)] +=
                            common * input.at(x, y, z, cc);
                }
    return grad_in;
}

Gradient rearrange_backward(const Tensor4& input, const Tensor4& grad_out)
{
    const auto& d = input.dims();
    Gradient grad_in(input.size(), 0.0);
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                for (int c = 0; c < d[3] / 8; ++c)
                    for (int o = 0; o < 8; ++o) {
                        int dx = o & 1, dy = (o >> 1) & 1, dz = (o >> 2) & 1;
                        grad_in[input.index(x, y, z, c * 8 + o)] =
                            grad_out.at(2 * x + dx, 2 * y + dy, 2 * z + dz, c);
                    }
    return grad_in;
}

Tensor4 gradient_to_tensor(const Gradient& g, const Dims4& dims)
{
    Tensor4 t(dims);
    for (std::size_t i = 0; i < g.size(); ++i)
        t[i] = g[i];
    return t;
}

int last_conv_index(const NetworkSpec& net)
{
    int idx = -1, ci = 0;
    for (const auto& l : net.layers)
        if (l.kind == LayerKind::conv)
            idx = ci++;
    return idx;
}

}  // namespace

std::vector<ConvWeights> backward(const NetworkSpec& net, const Tensor4& input,
                                  const std::vector<double>& targets, double decay)
{
    if (net.layers.empty() || net.layers.back().kind != LayerKind::logistic)
        throw std::invalid_argument("backward: final layer must be logistic");

    // Forward pass caching every activation.
    std::vector<Tensor4> acts;
    acts.push_back(input);
    std::size_t ci = 0;
    for (const auto& s : net.layers) {
        const Tensor4& cur = acts.back();
        switch (s.kind) {
        case LayerKind::conv: acts.push_back(conv3d(cur, s, net.conv_weights.at(ci++))); break;
        case LayerKind::mean_pool: acts.push_back(mean_pool(cur, s)); break;
        case LayerKind::lrn: acts.push_back(lrn(cur, s)); break;
        case LayerKind::relu: acts.push_back(relu(cur)); break;
        case LayerKind::rearrange: acts.push_back(rearrange_double(cur)); break;
        case LayerKind::logistic: acts.push_back(logistic(cur)); break;
        }
    }

    const Tensor4& preds = acts.back();
    if (preds.size() != targets.size())
        throw std::invalid_argument("backward: target count mismatch");

    // Loss gradient through the final logistic in one step: (F - y) / n.
    Tensor4 grad(preds.dims());
    const double inv_n = 1.0 / static_cast<double>(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        grad[i] = (preds[i] - targets[i]) * inv_n;

    std::vector<ConvWeights> grads(net.conv_weights.size());
    int conv_cursor = static_cast<int>(net.conv_weights.size());

    // Reverse walk, skipping the folded logistic.
    for (int li = static_cast<int>(net.layers.size()) - 2; li >= 0; --li) {
        const auto& s = net.layers[li];
        const Tensor4& in_act = acts[li];
        Gradient gin;
        switch (s.kind) {
        case LayerKind::conv: {
            --conv_cursor;
            Gradient gw, gb;
            gin = conv3d_backward(in_act, s, net.conv_weights[conv_cursor], grad, gw, gb);
            auto& out = grads[conv_cursor];
            out.weights.assign(gw.begin(), gw.end());
            out.biases.assign(gb.begin(), gb.end());
            break;
        }
        case LayerKind::mean_pool: gin = mean_pool_backward(in_act, s, grad); break;
        case LayerKind::lrn: gin = lrn_backward(in_act, s, grad); break;
        case LayerKind::relu: {
            gin.resize(in_act.size());
            for (std::size_t i = 0; i < in_act.size(); ++i)
                gin[i] = in_act[i] > 0.0 ? grad[i] : 0.0;
            break;
        }
        case LayerKind::rearrange: gin = rearrange_backward(in_act, grad); break;
        case LayerKind::logistic:
            throw std::invalid_argument("backward: logistic only supported as final layer");
        }
        grad = gradient_to_tensor(gin, in_act.dims());
    }

    // Weight decay on the final conv layer's parameters.
    if (decay != 0.0) {
        int last = last_conv_index(net);
        if (last >= 0) {
            const auto& w = net.conv_weights[last];
            auto& g = grads[last];
            for (std::size_t i = 0; i < w.weights.size(); ++i)
                g.weights[i] += decay * w.weights[i];
            for (std::size_t i = 0; i < w.biases.size(); ++i)
                g.biases[i] += decay * w.biases[i];
        }
    }
    return grads;
}

double gradient_check(const NetworkSpec& net, const Tensor4& input,
                      const std::vector<double>& targets, double decay)
{
    if (net.parameter_count() > 5000)
        throw std::invalid_argument("gradient_check: network too large for finite "
                                    "differences (> 5000 parameters)");

    auto eval_loss = [&](const NetworkSpec& n) {
        Tensor4 out = forward(n, input);
        int last = last_conv_index(n);
        std::vector<double> decay_params;
        if (last >= 0) {
            const auto& w = n.conv_weights[last];
            decay_params = w.weights;
            decay_params.insert(decay_params.end(), w.biases.begin(), w.biases.end());
        }
        return logistic_loss(out.data(), targets, decay, decay_params);
    };

    auto analytic = backward(net, input, targets, decay);

    const double h = 1e-4;
    double max_rel = 0.0;
    NetworkSpec probe = net;
    for (std::size_t layer = 0; layer < net.conv_weights.size(); ++layer) {
        auto check_param = [&](std::vector<double>& params, std::size_t i, double a) {
            double saved = params[i];
            params[i] = saved + h;
            double lp = eval_loss(probe);
            params[i] = saved - h;
            double lm = eval_loss(probe);
            params[i] = saved;
            double numeric = (lp - lm) / (2.0 * h);
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        };
        for (std::size_t i = 0; i < probe.conv_weights[layer].weights.size(); ++i)
            check_param(probe.conv_weights[layer].weights, i,
                        analytic[layer].weights[i]);
        for (std::size_t i = 0; i < probe.conv_weights[layer].biases.size(); ++i)
            check_param(probe.conv_weights[layer].biases, i, analytic[layer].biases[i]);
    }
    return max_rel;
}

}  // namespace liverseg
