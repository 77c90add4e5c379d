#include "liverseg/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "liverseg/cnn.hpp"
#include "liverseg/mhd.hpp"
#include "liverseg/phantom.hpp"
#include "liverseg/probmap.hpp"
#include "liverseg/volume_ops.hpp"

namespace fs = std::filesystem;

namespace liverseg {
namespace {

int parse_int(const std::string& key, const std::string& value)
{
    try {
        std::size_t pos = 0;
        int v = std::stoi(value, &pos);
        if (pos != value.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value)
{
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "1" || value == "true" || value == "on")
        return true;
    if (value == "0" || value == "false" || value == "off")
        return false;
    throw ConfigError(key + ": expected boolean, got '" + value + "'");
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class StageClock {
public:
    explicit StageClock(std::vector<StageTiming>& out) : out_(out) {}
    template <typename F>
    auto time(const std::string& name, F&& f)
    {
        auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(name, t0);
        } else {
            auto r = f();
            record(name, t0);
            return r;
        }
    }

private:
    void record(const std::string& name,
                std::chrono::steady_clock::time_point t0)
    {
        double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                       .count();
        out_.push_back({name, s});
    }
    std::vector<StageTiming>& out_;
};

std::string utc_timestamp()
{
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sidecar_path(const std::string& output_path)
{
    return fs::path(output_path).replace_extension(".provenance").string();
}

void write_provenance(const std::string& output_path, const std::string& stage,
                      const std::vector<std::pair<std::string, std::string>>& inputs,
                      const Dims3& dims, const Spacing3& spacing,
                      const std::vector<std::pair<std::string, std::string>>& params)
{
    std::ofstream out(sidecar_path(output_path));
    if (!out)
        throw DataError("cannot write provenance sidecar for " + output_path);
    out << "stage = " << stage << "\n";
    out << "timestamp = " << utc_timestamp() << "\n";
    for (const auto& [path, sum] : inputs) {
        out << "input = " << path << "\n";
        out << "input_checksum = " << sum << "\n";
    }
    out << "dims = " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
    out << std::setprecision(17);
    out << "spacing = " << spacing[0] << " " << spacing[1] << " " << spacing[2] << "\n";
    for (const auto& [k, v] : params)
        out << k << " = " << v << "\n";
}

std::string checksum_hex(const std::string& path)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << file_checksum(path);
    return os.str();
}

std::optional<Dims3> provenance_dims(const std::string& output_path)
{
    std::ifstream in(sidecar_path(output_path));
    if (!in)
        return std::nullopt;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        if (trim(line.substr(0, eq)) != "dims")
            continue;
        std::istringstream vs(line.substr(eq + 1));
        Dims3 d{0, 0, 0};
        if (vs >> d[0] >> d[1] >> d[2])
            return d;
        throw DataError(output_path + ": malformed dims in provenance sidecar");
    }
    return std::nullopt;
}

void ensure_output_dir(const PipelineConfig& cfg)
{
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec)
        throw DataError("cannot create output directory " + cfg.output_dir + ": " +
                        ec.message());
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::vector<std::pair<std::string, std::string>> energy_param_echo(
    const EnergyParams& e, double gamma_used, int bins)
{
    return {
        {"lambda", fmt(e.lambda)},
        {"beta", fmt(e.beta)},
        {"gamma", fmt(gamma_used)},
        {"tau", fmt(e.lbp.tau)},
        {"lbp_p", std::to_string(e.lbp.p)},
        {"lbp_r", fmt(e.lbp.r)},
        {"appearance_window", std::to_string(e.window[0]) + " " +
                                  std::to_string(e.window[1]) + " " +
                                  std::to_string(e.window[2])},
        {"likelihood_threshold", fmt(e.likelihood_threshold)},
        {"sign_mode", e.sign_mode == SignMode::literal ? "literal" : "corrected"},
        {"variance_mode",
         e.variance_mode == VarianceMode::variance ? "variance" : "variance_squared"},
        {"histogram_bins", std::to_string(bins)},
    };
}

}  // namespace

void PipelineConfig::validate() const
{
    if (!probability_path.empty() && !weights_path.empty())
        throw ConfigError("configure either a probability map or a weight file, "
                          "not both");
    bool any = resample_dims[0] || resample_dims[1] || resample_dims[2];
    bool all = resample_dims[0] > 0 && resample_dims[1] > 0 && resample_dims[2] > 0;
    if (any && !all)
        throw ConfigError("resample dims must all be positive (or all zero to "
                          "disable resampling)");
    if (!(window_width > 0.0))
        throw ConfigError("window_width must be positive");
    if (histogram_bins < 2)
        throw ConfigError("histogram_bins must be >= 2");
    if (cnn_channel_scale <= 0)
        throw ConfigError("cnn_channel_scale must be positive");
    try {
        diffusion.validate();
        energy.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

void apply_config_entry(PipelineConfig& c, const std::string& key,
                        const std::string& value)
{
    if (key == "volume") c.volume_path = value;
    else if (key == "probability") c.probability_path = value;
    else if (key == "weights") c.weights_path = value;
    else if (key == "truth") c.truth_path = value;
    else if (key == "result") c.result_path = value;
    else if (key == "cases") c.cases_path = value;
    else if (key == "phantom_spec") c.phantom_spec_path = value;
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "resample_x") c.resample_dims[0] = parse_int(key, value);
    else if (key == "resample_y") c.resample_dims[1] = parse_int(key, value);
    else if (key == "resample_z") c.resample_dims[2] = parse_int(key, value);
    else if (key == "window_enabled") c.window_enabled = parse_bool(key, value);
    else if (key == "window_level") c.window_level = parse_double(key, value);
    else if (key == "window_width") c.window_width = parse_double(key, value);
    else if (key == "diffusion_iterations") c.diffusion.iterations = parse_int(key, value);
    else if (key == "diffusion_time_step") c.diffusion.time_step = parse_double(key, value);
    else if (key == "diffusion_conductance")
        c.diffusion.conductance = parse_double(key, value);
    else if (key == "lambda") c.energy.lambda = parse_double(key, value);
    else if (key == "beta") c.energy.beta = parse_double(key, value);
    else if (key == "gamma") c.energy.gamma = parse_double(key, value);
    else if (key == "tau") c.energy.lbp.tau = parse_double(key, value);
    else if (key == "lbp_p") c.energy.lbp.p = parse_int(key, value);
    else if (key == "lbp_r") c.energy.lbp.r = parse_double(key, value);
    else if (key == "appearance_window_x") c.energy.window[0] = parse_int(key, value);
    else if (key == "appearance_window_y") c.energy.window[1] = parse_int(key, value);
    else if (key == "appearance_window_z") c.energy.window[2] = parse_int(key, value);
    else if (key == "likelihood_threshold")
        c.energy.likelihood_threshold = parse_double(key, value);
    else if (key == "sign_mode") {
        if (value == "literal") c.energy.sign_mode = SignMode::literal;
        else if (value == "corrected") c.energy.sign_mode = SignMode::corrected;
        else throw ConfigError("sign_mode must be 'literal' or 'corrected'");
    } else if (key == "variance_mode") {
        if (value == "variance") c.energy.variance_mode = VarianceMode::variance;
        else if (value == "variance_squared")
            c.energy.variance_mode = VarianceMode::variance_squared;
        else throw ConfigError("variance_mode must be 'variance' or 'variance_squared'");
    } else if (key == "histogram_bins") c.histogram_bins = parse_int(key, value);
    else if (key == "cnn_channel_scale") c.cnn_channel_scale = parse_int(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(
                                std::stoull(value));
    else
        throw ConfigError("unknown config key '" + key + "'");
}

PipelineConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    PipelineConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

void apply_overrides(PipelineConfig& c,
                     const std::vector<std::pair<std::string, std::string>>& overrides)
{
    for (const auto& [k, v] : overrides)
        apply_config_entry(c, k, v);
}

std::uint64_t file_checksum(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path + " for checksumming");
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in)
            break;
    }
    return h;
}

PreprocessResult run_preprocess(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.volume_path.empty())
        throw ConfigError("preprocess: no input volume configured");
    ensure_output_dir(cfg);

    PreprocessResult res;
    StageClock clock(res.timings);

    Volume vol = clock.time("load", [&] { return load_volume(cfg.volume_path); });
    if (cfg.resample_dims[0] > 0)
        vol = clock.time("resample", [&] { return resample(vol, cfg.resample_dims); });
    if (cfg.window_enabled)
        vol = clock.time("window", [&] {
            return window_normalize(vol, cfg.window_level, cfg.window_width);
        });
    if (cfg.diffusion.iterations > 0)
        vol = clock.time("diffusion",
                         [&] { return anisotropic_diffusion(vol, cfg.diffusion); });

    res.output_path = (fs::path(cfg.output_dir) / "preprocessed.mhd").string();
    clock.time("save", [&] { save_volume(vol, res.output_path); });

    write_provenance(
        res.output_path, "preprocess",
        {{cfg.volume_path, checksum_hex(cfg.volume_path)}}, vol.dims(), vol.spacing(),
        {{"resample", std::to_string(cfg.resample_dims[0]) + " " +
                          std::to_string(cfg.resample_dims[1]) + " " +
                          std::to_string(cfg.resample_dims[2])},
         {"window_enabled", cfg.window_enabled ? "1" : "0"},
         {"window_level", fmt(cfg.window_level)},
         {"window_width", fmt(cfg.window_width)},
         {"diffusion_iterations", std::to_string(cfg.diffusion.iterations)},
         {"diffusion_time_step", fmt(cfg.diffusion.time_step)},
         {"diffusion_conductance", fmt(cfg.diffusion.conductance)}});
    return res;
}

InferResult run_infer(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.volume_path.empty())
        throw ConfigError("infer: no input volume configured");
    if (cfg.weights_path.empty())
        throw ConfigError("infer: no weight file configured");
    ensure_output_dir(cfg);

    Volume vol = load_volume(cfg.volume_path);
    auto arch = scaled_architecture(cfg.cnn_channel_scale);
    NetworkSpec& net = arch.net;
    if (vol.dims()[0] != net.input_dims[0] || vol.dims()[1] != net.input_dims[1] ||
        vol.dims()[2] != net.input_dims[2])
        throw DataError("infer: volume dims do not match the network input (" +
                        std::to_string(net.input_dims[0]) + "x" +
                        std::to_string(net.input_dims[1]) + "x" +
                        std::to_string(net.input_dims[2]) + ")");
    try {
        load_weights(net, cfg.weights_path);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }

    Tensor4 input(net.input_dims);
    for (int z = 0; z < vol.dims()[2]; ++z)
        for (int y = 0; y < vol.dims()[1]; ++y)
            for (int x = 0; x < vol.dims()[0]; ++x)
                input.at(x, y, z, 0) = vol.at(x, y, z);

    Tensor4 out = forward(net, input);
    const auto& od = out.dims();
    if (od[3] != 1)
        throw NumericalError("infer: network output is not single-channel");

    // Preserve the physical extent when mapping to output spacing.
    Spacing3 sp;
    for (int a = 0; a < 3; ++a)
        sp[a] = vol.spacing()[a] * vol.dims()[a] / od[a];
    ProbabilityMap map({od[0], od[1], od[2]}, sp);
    for (int z = 0; z < od[2]; ++z)
        for (int y = 0; y < od[1]; ++y)
            for (int x = 0; x < od[0]; ++x)
                map.at(x, y, z) = out.at(x, y, z, 0);

    InferResult res;
    res.output_path = (fs::path(cfg.output_dir) / "probability.mhd").string();
    res.output_dims = {od[0], od[1], od[2]};
    save_probability_map(map, res.output_path);
    write_provenance(res.output_path, "infer",
                     {{cfg.volume_path, checksum_hex(cfg.volume_path)},
                      {cfg.weights_path, checksum_hex(cfg.weights_path)}},
                     map.dims(), map.spacing(),
                     {{"cnn_channel_scale", std::to_string(cfg.cnn_channel_scale)}});
    return res;
}

RefineResult run_refine(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.volume_path.empty())
        throw ConfigError("refine: no input volume configured");
    if (cfg.probability_path.empty())
        throw ConfigError("refine: no probability map configured");
    ensure_output_dir(cfg);

    RefineResult res;
    StageClock clock(res.timings);

    Volume vol = clock.time("load", [&] { return load_volume(cfg.volume_path); });
    ProbabilityMap prob = load_probability_map(cfg.probability_path);
    if (vol.dims() != prob.dims())
        throw DataError("refine: volume and probability map dimensions differ");

    LabelMask l0 = clock.time("initial_region", [&] {
        LabelMask m = threshold_likelihood(prob, cfg.energy.likelihood_threshold);
        std::size_t n = 0;
        for (auto v : m.data())
            n += v;
        if (n == 0)
            throw DataError("refine: no voxel reaches the likelihood threshold "
                            "(empty initial region)");
        return largest_component(m);
    });
    res.l0_voxels = 0;
    for (auto v : l0.data())
        res.l0_voxels += v;

    IntensityRange range = estimate_intensity_range(vol, l0);
    try {
        range.validate();
    } catch (const std::invalid_argument& e) {
        throw NumericalError(e.what());
    }

    JointFeatureVolume feats = clock.time(
        "features", [&] { return compute_features(vol, cfg.energy.lbp); });
    FeatureHistogramModel model =
        fit_reference_model(feats, l0, cfg.histogram_bins, cfg.energy.lbp);

    EnergyParams energy = cfg.energy;
    if (energy.gamma == 0.0)
        energy.gamma = default_gamma(model);
    res.gamma_used = energy.gamma;

    Grid3<float> appearance;
    if (energy.gamma > 0.0)
        appearance = clock.time("appearance", [&] {
            return appearance_map(feats, model, energy.window, energy.variance_mode);
        });

    Grid3<float> f = threshold_map(vol, range);
    Grid3<float> r = clock.time(
        "region_score", [&] { return region_score(vol, f, prob, appearance, energy); });

    GridGraph graph = clock.time("build_graph", [&] { return build_graph(r, vol, energy); });
    CutResult cut;
    try {
        cut = clock.time("maxflow", [&] { return solve_maxflow(graph); });
    } catch (const std::runtime_error& e) {
        throw NumericalError(e.what());
    }

    LabelMask mask(vol.dims(), vol.spacing());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = cut.labels[i];

    res.initial_energy = total_energy(vol, l0, r, energy);
    res.refined_energy = total_energy(vol, mask, r, energy);
    if (!std::isfinite(res.refined_energy) || !std::isfinite(res.initial_energy))
        throw NumericalError("refine: non-finite energy");

    res.output_path = (fs::path(cfg.output_dir) / "refined_mask.mhd").string();
    clock.time("save", [&] { save_mask(mask, res.output_path); });

    // The report holds only run-invariant values; timings live in the sidecar.
    {
        std::ofstream log(fs::path(cfg.output_dir) / "refine_report.txt");
        log << std::setprecision(17);
        log << "l0_voxels = " << res.l0_voxels << "\n";
        log << "gamma = " << res.gamma_used << "\n";
        log << "initial_energy = " << res.initial_energy << "\n";
        log << "refined_energy = " << res.refined_energy << "\n";
    }

    auto params = energy_param_echo(energy, energy.gamma, cfg.histogram_bins);
    for (const auto& t : res.timings)
        params.push_back({"seconds_" + t.name, fmt(t.seconds)});
    write_provenance(res.output_path, "refine",
                     {{cfg.volume_path, checksum_hex(cfg.volume_path)},
                      {cfg.probability_path, checksum_hex(cfg.probability_path)}},
                     mask.dims(), mask.spacing(), params);
    return res;
}

EvaluateResult run_evaluate(const PipelineConfig& cfg)
{
    cfg.validate();
    ensure_output_dir(cfg);

    std::vector<std::pair<std::string, std::string>> pairs;
    if (!cfg.cases_path.empty()) {
        std::ifstream in(cfg.cases_path);
        if (!in)
            throw ConfigError("cannot open case list " + cfg.cases_path);
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#')
                continue;
            std::istringstream ls(line);
            std::string result, truth;
            if (!(ls >> result >> truth))
                throw ConfigError(cfg.cases_path + ": expected 'result truth' per line");
            pairs.emplace_back(result, truth);
        }
    } else {
        if (cfg.result_path.empty() || cfg.truth_path.empty())
            throw ConfigError("evaluate: configure result and truth masks (or a "
                              "case list)");
        pairs.emplace_back(cfg.result_path, cfg.truth_path);
    }
    if (pairs.empty())
        throw ConfigError("evaluate: no cases configured");

    EvaluateResult res;
    std::vector<std::pair<double, double>> volumes;
    std::ostringstream table;
    table << std::fixed << std::setprecision(6);
    table << "case\tvoe_pct\trvd_pct\tasd_mm\trmsd_mm\tmsd_mm\t"
             "score_voe\tscore_rvd\tscore_asd\tscore_rmsd\tscore_msd\ttotal\n";

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [result_path, truth_path] = pairs[i];
        LabelMask result = load_mask(result_path);
        LabelMask truth = load_mask(truth_path);
        if (auto d = provenance_dims(result_path); d && *d != result.dims())
            throw DataError(result_path +
                            ": provenance dims disagree with the stored mask");
        if (result.dims() != truth.dims())
            throw DataError("evaluate: result and truth dimensions differ for " +
                            result_path);

        MetricReport r;
        try {
            r = evaluate_masks(result, truth);
        } catch (const std::invalid_argument& e) {
            throw DataError(std::string("evaluate: ") + e.what());
        }
        res.reports.push_back(r);
        volumes.emplace_back(mask_volume_ml(result), mask_volume_ml(truth));

        table << fs::path(result_path).stem().string() << '\t' << r.voe << '\t'
              << r.rvd << '\t' << r.dist.asd << '\t' << r.dist.rmsd << '\t'
              << r.dist.msd;
        for (double s : r.scores)
            table << '\t' << s;
        table << '\t' << r.total_score << '\n';
    }

    if (volumes.size() >= 3) {
        try {
            res.stats = volume_stats(volumes);
        } catch (const std::invalid_argument& e) {
            throw NumericalError(e.what());
        }
        const auto& s = *res.stats;
        table << "\nvolume_agreement\n";
        table << "slope\t" << s.slope << "\nintercept_ml\t" << s.intercept
              << "\ncorrelation\t" << s.correlation << "\nmean_difference_ml\t"
              << s.mean_difference << "\nloa_low_ml\t" << s.loa_low
              << "\nloa_high_ml\t" << s.loa_high << "\ncv_pct\t" << s.cv_percent
              << "\n";
    }

    res.report_path = (fs::path(cfg.output_dir) / "metrics.txt").string();
    std::ofstream out(res.report_path);
    if (!out)
        throw DataError("cannot write " + res.report_path);
    out << table.str();
    return res;
}

PhantomResult run_phantom(const PipelineConfig& cfg)
{
    cfg.validate();
    ensure_output_dir(cfg);

    PhantomSpec spec;
    if (!cfg.phantom_spec_path.empty()) {
        try {
            spec = load_phantom_spec(cfg.phantom_spec_path);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        } catch (const std::runtime_error& e) {
            throw DataError(e.what());
        }
    } else {
        spec.dims = {64, 64, 64};
        spec.liver.center = {32, 32, 32};
        spec.liver.radii = {20, 16, 14};
        spec.seed = cfg.seed;
    }

    Phantom ph;
    try {
        ph = make_phantom(spec);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    PhantomResult res;
    fs::path dir(cfg.output_dir);
    res.volume_path = (dir / "phantom_volume.mhd").string();
    res.mask_path = (dir / "phantom_mask.mhd").string();
    res.probability_path = (dir / "phantom_probability.mhd").string();
    save_volume(ph.volume, res.volume_path);
    save_mask(ph.mask, res.mask_path);
    save_probability_map(ph.probability, res.probability_path);

    std::vector<std::pair<std::string, std::string>> params{
        {"seed", std::to_string(spec.seed)},
        {"noise_sigma", fmt(spec.noise_sigma)},
        {"blur_sigma", fmt(spec.blur_sigma)},
    };
    write_provenance(res.volume_path, "phantom", {}, ph.volume.dims(),
                     ph.volume.spacing(), params);
    write_provenance(res.mask_path, "phantom", {}, ph.mask.dims(), ph.mask.spacing(),
                     params);
    write_provenance(res.probability_path, "phantom", {}, ph.probability.dims(),
                     ph.probability.spacing(), params);
    return res;
}

}  // namespace liverseg
