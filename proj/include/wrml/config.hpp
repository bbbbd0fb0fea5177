#ifndef WRML_CONFIG_HPP
#define WRML_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wrml/covariance.hpp"
#include "wrml/denoise.hpp"
#include "wrml/flow.hpp"
#include "wrml/grid.hpp"
#include "wrml/smoother.hpp"

namespace wrml {

// Full experiment description, read from a JSON file. Unknown keys are
// rejected so typos fail fast. Defaults reproduce the reference setup:
// 41x41 nodes on [0,2]^2, oscillatory kernel sigma=0.8 rho=1.1, water cut
// observed at 9 producers every 1.0 up to 60.0 with noise std 0.02,
// 200 members.
struct ObservationConfig {
    double noise_std = 0.02;
    double start = 1.0;
    double interval = 1.0;
    double end = 60.0;
    double forecast_time = 70.0;

    std::vector<double> times() const;
    std::vector<double> times_with_forecast() const;
};

struct NoiseModelConfig {
    double sigma_o = 20.0;   // explicit noise std for denoising
    double sigma_pr = 13.0;
    double nu = 3.0;
    bool omega_pr_auto = true;
    double omega_pr = 0.0;   // used when omega_pr_auto is false
    bool tune = false;       // KS-based trial-and-error prior calibration
    int tune_draws = 10000;
};

struct LandscapeConfig {
    bool enabled = true;
    int resolution = 31;
    double margin = 0.3;
};

struct ExperimentConfig {
    int grid_nodes = 41;      // per side
    double domain_length = 2.0;
    CovarianceSpec kernel{0.8, 1.1};
    TransformKind transform = TransformKind::NonMonotonic;
    FlowConfig flow;
    double total_injection_rate = 0.04;
    ObservationConfig observations;
    int ensemble_size = 200;
    int threads = 0;
    LMSchedule lm;
    std::vector<Method> methods{Method::Hybrid, Method::IES};
    NoiseModelConfig noise_model;
    std::vector<double> sweep_exponents;
    LandscapeConfig landscape;
    std::uint64_t seed = 1;

    Grid2D grid() const;
    WellSet wells(const Grid2D& g) const;

    // Canonical serialization (sorted keys); hashing it identifies the run.
    std::string canonical_json() const;
    std::uint64_t config_hash() const;
};

ExperimentConfig default_experiment_config();
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

// Named deterministic seed streams derived from the master seed, so stages
// can be re-run independently without replaying earlier draws: the stream
// seed is splitmix64(master ^ fnv1a64(name)).
std::uint64_t seed_for(std::uint64_t master, const std::string& stream);

} // namespace wrml

#endif
