#pragma once

// Stage orchestration: preprocess -> probability map (network inference or
// file ingestion) -> graph-cut refinement -> evaluation. Flat key=value
// configuration with override precedence CLI > file > defaults; every stage
// writes a provenance sidecar next to its output.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "liverseg/diffusion.hpp"
#include "liverseg/energy.hpp"
#include "liverseg/metrics.hpp"

namespace liverseg {

// Exit codes 2 / 3 / 4 for scripting.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::string volume_path;
    std::string probability_path;  // at most one of probability/weights
    std::string weights_path;
    std::string truth_path;
    std::string result_path;  // evaluate: mask to score against truth
    std::string cases_path;   // evaluate batch: "result truth" per line
    std::string phantom_spec_path;
    std::string output_dir = ".";

    Dims3 resample_dims{0, 0, 0};  // all zero = stage disabled
    bool window_enabled = true;
    double window_level = 40.0;
    double window_width = 400.0;
    DiffusionParams diffusion;  // iterations 0 disables the stage

    EnergyParams energy;  // energy.gamma == 0 means "derive from the model"
    int histogram_bins = 32;

    int cnn_channel_scale = 16;
    std::uint64_t seed = 1;

    void validate() const;
};

// key=value lines, '#' comments; unknown keys raise ConfigError.
void apply_config_entry(PipelineConfig& config, const std::string& key,
                        const std::string& value);
PipelineConfig load_config(const std::string& path);
void apply_overrides(PipelineConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& overrides);

// FNV-1a over a file's bytes, for provenance sidecars.
std::uint64_t file_checksum(const std::string& path);

struct StageTiming {
    std::string name;
    double seconds = 0.0;
};

struct PreprocessResult {
    std::string output_path;
    std::vector<StageTiming> timings;
};

struct InferResult {
    std::string output_path;
    Dims3 output_dims{0, 0, 0};
};

struct RefineResult {
    std::string output_path;
    double initial_energy = 0.0;  // energy of the thresholded L0 labeling
    double refined_energy = 0.0;
    double gamma_used = 0.0;
    std::size_t l0_voxels = 0;
    std::vector<StageTiming> timings;
};

struct EvaluateResult {
    std::string report_path;
    std::vector<MetricReport> reports;
    std::optional<VolumeStats> stats;  // present for >= 3 cases
};

PreprocessResult run_preprocess(const PipelineConfig& config);
InferResult run_infer(const PipelineConfig& config);
RefineResult run_refine(const PipelineConfig& config);
EvaluateResult run_evaluate(const PipelineConfig& config);

struct PhantomResult {
    std::string volume_path;
    std::string mask_path;
    std::string probability_path;
};
PhantomResult run_phantom(const PipelineConfig& config);

}  // namespace liverseg
