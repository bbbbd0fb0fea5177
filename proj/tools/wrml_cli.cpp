// Command line front end for the weighted ensemble inversion pipeline.
// Stages communicate only through files in the output directory, so any
// stage can be re-run on its own. Exit codes: 0 success, 2 configuration
// problems, 3 numerical failures, 4 anything else.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wrml/config.hpp"
#include "wrml/errors.hpp"
#include "wrml/experiment.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string out_dir = "out";
    long long seed = -1;
    int threads = -1;
    std::string method;
};

wrml::ExperimentConfig resolve_config(const Options& opt) {
    wrml::ExperimentConfig cfg = opt.config_path.empty()
                                     ? wrml::default_experiment_config()
                                     : wrml::load_experiment_config(opt.config_path);
    if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
    if (opt.threads >= 0) cfg.threads = opt.threads;
    return cfg;
}

std::vector<wrml::Method> resolve_methods(const Options& opt,
                                          const wrml::ExperimentConfig& cfg) {
    if (opt.method.empty()) return cfg.methods;
    return {wrml::method_from_string(opt.method)};
}

void add_common(CLI::App* cmd, Options& opt, bool with_method) {
    cmd->add_option("-c,--config", opt.config_path, "experiment config (JSON)");
    cmd->add_option("-o,--out", opt.out_dir, "output directory");
    cmd->add_option("-s,--seed", opt.seed, "override the master seed");
    cmd->add_option("-t,--threads", opt.threads, "worker threads (0 = hardware)");
    if (with_method)
        cmd->add_option("-m,--method", opt.method, "restrict to one method (ies|hybrid)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-phase flow inversion with iterative ensemble smoothers and "
                 "importance weights"};
    app.require_subcommand(1);
    Options opt;

    auto* c_truth = app.add_subcommand("truth", "draw the reference field and observations");
    auto* c_prior = app.add_subcommand("prior", "draw the prior ensemble");
    auto* c_assim = app.add_subcommand("assimilate", "run the iterative smoother");
    auto* c_weigh = app.add_subcommand("weigh", "compute importance weights");
    auto* c_denoise = app.add_subcommand("denoise", "denoise the log-weights");
    auto* c_forecast = app.add_subcommand("forecast", "forecast water cut per member");
    auto* c_sweep = app.add_subcommand("sweep", "power-transform exponent sweep");
    auto* c_land = app.add_subcommand("landscape", "objective slice through the truth");
    auto* c_all = app.add_subcommand("run-all", "run every stage in order");

    add_common(c_truth, opt, false);
    add_common(c_prior, opt, false);
    add_common(c_assim, opt, true);
    add_common(c_weigh, opt, true);
    add_common(c_denoise, opt, true);
    add_common(c_forecast, opt, true);
    add_common(c_sweep, opt, true);
    add_common(c_land, opt, false);
    add_common(c_all, opt, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        wrml::ExperimentConfig cfg = resolve_config(opt);
        const std::string& out = opt.out_dir;

        if (c_truth->parsed()) {
            wrml::TruthArtifacts t = wrml::run_truth_stage(cfg, out);
            std::printf("truth: misfit %.6g, median breakthrough %.6g\n", t.truth_misfit,
                        t.breakthrough_median);
        } else if (c_prior->parsed()) {
            wrml::run_prior_stage(cfg, out);
            std::printf("prior: %d members\n", cfg.ensemble_size);
        } else if (c_assim->parsed()) {
            for (wrml::Method m : resolve_methods(opt, cfg)) {
                auto a = wrml::run_assimilation_stage(cfg, out, m);
                std::printf("%s: %zu iterations, mean misfit %.6g%s\n",
                            wrml::to_string(m).c_str(), a.result.iterations.size(),
                            a.misfit_obs.mean(),
                            a.result.hit_max_iterations ? " (iteration cap)" : "");
            }
        } else if (c_weigh->parsed()) {
            for (wrml::Method m : resolve_methods(opt, cfg)) {
                auto w = wrml::run_weight_stage(cfg, out, m);
                std::printf("%s: ess %.4g, weight/misfit correlation %.4g\n",
                            wrml::to_string(m).c_str(), w.weights.ess, w.correlation);
            }
        } else if (c_denoise->parsed()) {
            for (wrml::Method m : resolve_methods(opt, cfg)) {
                auto d = wrml::run_denoise_stage(cfg, out, m);
                std::printf("%s: ess %.4g after denoising (sigma_pr %.4g, nu %.3g)\n",
                            wrml::to_string(m).c_str(), d.weights.ess, d.model.sigma_pr,
                            d.model.nu);
            }
        } else if (c_forecast->parsed()) {
            for (wrml::Method m : resolve_methods(opt, cfg)) {
                wrml::run_forecast_stage(cfg, out, m);
                std::printf("%s: forecast written\n", wrml::to_string(m).c_str());
            }
        } else if (c_sweep->parsed()) {
            for (wrml::Method m : resolve_methods(opt, cfg)) {
                auto pts = wrml::run_sweep_stage(cfg, out, m);
                std::size_t best = 0;
                for (std::size_t i = 1; i < pts.size(); ++i)
                    if (pts[i].log_density > pts[best].log_density) best = i;
                std::printf("%s: best exponent %.3g (log density %.6g)\n",
                            wrml::to_string(m).c_str(), pts[best].exponent,
                            pts[best].log_density);
            }
        } else if (c_land->parsed()) {
            auto l = wrml::run_landscape_stage(cfg, out);
            std::printf("landscape: %zu local minima on a %dx%d slice\n",
                        wrml::find_local_minima(l.slice.values).size(),
                        cfg.landscape.resolution, cfg.landscape.resolution);
        } else if (c_all->parsed()) {
            wrml::run_all(cfg, out);
            std::printf("pipeline complete in %s\n", out.c_str());
        }
        return 0;
    } catch (const wrml::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const wrml::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "stage failure: %s\n", e.what());
        return 4;
    }
}
