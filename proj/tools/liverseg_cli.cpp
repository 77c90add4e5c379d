// Command-line front end: preprocess | infer | refine | evaluate | phantom.

#include <iostream>

#include <CLI11.hpp>

#include "liverseg/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;  // key=value overrides
    std::string output_dir;
    std::string volume, probability, weights, truth, result, cases, phantom_spec;
};

void add_common(CLI::App* cmd, CommonArgs& a)
{
    cmd->add_option("--config", a.config_path, "key = value configuration file");
    cmd->add_option("--set", a.sets,
                    "override a config entry as key=value (repeatable)");
    cmd->add_option("-o,--output-dir", a.output_dir, "output directory");
    cmd->add_option("--volume", a.volume, "input volume (.mhd)");
    cmd->add_option("--probability", a.probability, "probability map (.mhd)");
    cmd->add_option("--weights", a.weights, "network weight file");
    cmd->add_option("--truth", a.truth, "ground-truth mask (.mhd)");
    cmd->add_option("--result", a.result, "result mask to evaluate (.mhd)");
    cmd->add_option("--cases", a.cases, "case list file: 'result truth' per line");
    cmd->add_option("--phantom-spec", a.phantom_spec, "phantom description file");
}

liverseg::PipelineConfig build_config(const CommonArgs& a)
{
    liverseg::PipelineConfig cfg;
    if (!a.config_path.empty())
        cfg = liverseg::load_config(a.config_path);

    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : a.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw liverseg::ConfigError("--set expects key=value, got '" + s + "'");
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    auto direct = [&](const char* key, const std::string& value) {
        if (!value.empty())
            overrides.emplace_back(key, value);
    };
    direct("output_dir", a.output_dir);
    direct("volume", a.volume);
    direct("probability", a.probability);
    direct("weights", a.weights);
    direct("truth", a.truth);
    direct("result", a.result);
    direct("cases", a.cases);
    direct("phantom_spec", a.phantom_spec);

    liverseg::apply_overrides(cfg, overrides);
    return cfg;
}

void print_timings(const std::vector<liverseg::StageTiming>& timings)
{
    for (const auto& t : timings)
        std::cout << "  " << t.name << ": " << t.seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"liver segmentation pipeline"};
    app.require_subcommand(1);

    CommonArgs pre_a, infer_a, refine_a, eval_a, phantom_a;
    auto* pre = app.add_subcommand("preprocess", "resample, window, denoise");
    auto* infer = app.add_subcommand("infer", "probability map from network weights");
    auto* refine = app.add_subcommand("refine", "graph-cut segmentation refinement");
    auto* eval = app.add_subcommand("evaluate", "score masks against ground truth");
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic test case");
    add_common(pre, pre_a);
    add_common(infer, infer_a);
    add_common(refine, refine_a);
    add_common(eval, eval_a);
    add_common(phantom, phantom_a);

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) {
            auto r = liverseg::run_preprocess(build_config(pre_a));
            std::cout << "preprocessed volume: " << r.output_path << "\n";
            print_timings(r.timings);
        } else if (infer->parsed()) {
            auto r = liverseg::run_infer(build_config(infer_a));
            std::cout << "probability map: " << r.output_path << " ("
                      << r.output_dims[0] << "x" << r.output_dims[1] << "x"
                      << r.output_dims[2] << ")\n";
        } else if (refine->parsed()) {
            auto r = liverseg::run_refine(build_config(refine_a));
            std::cout << "refined mask: " << r.output_path << "\n"
                      << "initial region voxels: " << r.l0_voxels << "\n"
                      << "gamma: " << r.gamma_used << "\n"
                      << "energy: " << r.initial_energy << " -> "
                      << r.refined_energy << "\n";
            print_timings(r.timings);
        } else if (eval->parsed()) {
            auto r = liverseg::run_evaluate(build_config(eval_a));
            std::cout << "metric report: " << r.report_path << " ("
                      << r.reports.size() << " case"
                      << (r.reports.size() == 1 ? "" : "s") << ")\n";
        } else if (phantom->parsed()) {
            auto r = liverseg::run_phantom(build_config(phantom_a));
            std::cout << "phantom volume: " << r.volume_path << "\n"
                      << "phantom mask: " << r.mask_path << "\n"
                      << "phantom probability: " << r.probability_path << "\n";
        }
    } catch (const liverseg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const liverseg::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const liverseg::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
