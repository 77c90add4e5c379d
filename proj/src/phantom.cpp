#include "liverseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace liverseg {
namespace {

bool inside(const Ellipsoid& e, int x, int y, int z)
{
    double dx = (x - e.center[0]) / e.radii[0];
    double dy = (y - e.center[1]) / e.radii[1];
    double dz = (z - e.center[2]) / e.radii[2];
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

void check_contained(const Ellipsoid& e, const Dims3& dims, const std::string& name)
{
    for (int a = 0; a < 3; ++a) {
        if (!(e.radii[a] > 0.0))
            throw std::invalid_argument("phantom: " + name + " radii must be positive");
        if (e.center[a] - e.radii[a] < 0.0 || e.center[a] + e.radii[a] > dims[a] - 1)
            throw std::invalid_argument("phantom: " + name + " not contained in grid");
    }
}

std::vector<double> gaussian_kernel(double sigma)
{
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        sum += k[i + radius];
    }
    for (auto& v : k)
        v /= sum;
    return k;
}

}  // namespace

Grid3<float> gaussian_blur(const Grid3<float>& in, double sigma)
{
    if (!(sigma > 0.0))
        return in;
    auto kernel = gaussian_kernel(sigma);
    int radius = static_cast<int>(kernel.size() / 2);
    const auto& d = in.dims();

    Grid3<float> a = in;
    Grid3<float> b(d, in.spacing());
    // One pass per axis, replicated borders.
    for (int axis = 0; axis < 3; ++axis) {
        for (int z = 0; z < d[2]; ++z)
            for (int y = 0; y < d[1]; ++y)
                for (int x = 0; x < d[0]; ++x) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i) {
                        int xx = x, yy = y, zz = z;
                        (axis == 0 ? xx : axis == 1 ? yy : zz) += i;
                        acc += kernel[i + radius] * a.at_clamped(xx, yy, zz);
                    }
                    b.at(x, y, z) = static_cast<float>(acc);
                }
        std::swap(a, b);
    }
    return a;
}

Phantom make_phantom(const PhantomSpec& spec)
{
    check_contained(spec.liver, spec.dims, "liver");
    if (spec.confounder)
        check_contained(*spec.confounder, spec.dims, "confounder");

    Phantom ph{Volume(spec.dims, spec.spacing), LabelMask(spec.dims, spec.spacing),
               ProbabilityMap(spec.dims, spec.spacing)};

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    const auto& d = spec.dims;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                bool liver = inside(spec.liver, x, y, z);
                bool conf = spec.confounder && inside(*spec.confounder, x, y, z);
                double mean = liver || conf ? spec.liver_mean : spec.background_mean;
                double sigma = conf && !liver ? spec.confounder_noise_sigma : spec.noise_sigma;
                double n = noise(rng);  // drawn per voxel regardless of sigma, keeps layout stable
                ph.volume.at(x, y, z) = static_cast<float>(mean + sigma * n);
                ph.mask.at(x, y, z) = liver ? 1 : 0;
            }

    Grid3<float> soft(spec.dims, spec.spacing);
    for (std::size_t i = 0; i < soft.size(); ++i)
        soft[i] = static_cast<float>(ph.mask[i]);
    soft = gaussian_blur(soft, spec.blur_sigma);
    for (std::size_t i = 0; i < soft.size(); ++i) {
        // Blend with the mask itself: foreground stays >= 0.5, background < 0.5.
        double p = 0.5 * ph.mask[i] + 0.5 * soft[i];
        ph.probability[i] = static_cast<float>(std::clamp(p, 0.0, 1.0));
    }
    return ph;
}

PhantomSpec load_phantom_spec(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open phantom spec: " + path);

    PhantomSpec spec;
    bool have_conf_center = false, have_conf_radii = false;
    Ellipsoid conf;

    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        std::istringstream key_ss(line.substr(0, eq));
        std::string key;
        key_ss >> key;
        std::istringstream val(line.substr(eq + 1));

        auto read3 = [&](auto& arr) {
            if (!(val >> arr[0] >> arr[1] >> arr[2]))
                throw std::runtime_error(path + ": malformed value for " + key);
        };
        auto read1 = [&](auto& v) {
            if (!(val >> v))
                throw std::runtime_error(path + ": malformed value for " + key);
        };

        if (key == "dims") read3(spec.dims);
        else if (key == "spacing") read3(spec.spacing);
        else if (key == "liver_center") read3(spec.liver.center);
        else if (key == "liver_radii") read3(spec.liver.radii);
        else if (key == "liver_mean") read1(spec.liver_mean);
        else if (key == "noise_sigma") read1(spec.noise_sigma);
        else if (key == "background_mean") read1(spec.background_mean);
        else if (key == "confounder_center") { read3(conf.center); have_conf_center = true; }
        else if (key == "confounder_radii") { read3(conf.radii); have_conf_radii = true; }
        else if (key == "confounder_noise_sigma") read1(spec.confounder_noise_sigma);
        else if (key == "blur_sigma") read1(spec.blur_sigma);
        else if (key == "seed") read1(spec.seed);
        else if (!key.empty())
            throw std::runtime_error(path + ": unknown phantom key " + key);
    }
    if (have_conf_center != have_conf_radii)
        throw std::runtime_error(path + ": confounder needs both center and radii");
    if (have_conf_center)
        spec.confounder = conf;
    return spec;
}

}  // namespace liverseg
