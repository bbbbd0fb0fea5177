#ifndef WRML_EXPERIMENT_HPP
#define WRML_EXPERIMENT_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wrml/config.hpp"
#include "wrml/covariance.hpp"
#include "wrml/denoise.hpp"
#include "wrml/flow.hpp"
#include "wrml/smoother.hpp"
#include "wrml/weights.hpp"

namespace wrml {

// Forward operator shared by every stage: latent field -> transform ->
// permeability -> two-phase simulation -> water cut rows flattened in time
// order (row t of the table is contiguous).
struct ForwardModel {
    Grid2D grid;
    WellSet wells;
    FlowConfig flow;
    TransformKind transform = TransformKind::Identity;
    std::vector<double> times;

    Eigen::VectorXd predict_from_m(const Eigen::VectorXd& m) const;
    Eigen::VectorXd predict_from_x(const Eigen::VectorXd& x) const;
};

ForwardModel make_forward_model(const ExperimentConfig& cfg, bool with_forecast);

// -log N(outcome; mu_w, var_w) under the weighted ensemble; the variance
// carries the 1/(1 - sum w^2) correction, matching n/(n-1) for uniform
// weights. Throws DegenerateEnsemble when the weighted spread vanishes.
double log_score(const Eigen::VectorXd& samples, const Eigen::VectorXd& weights,
                 double outcome);

// Pearson correlation; guards: sizes equal, at least 3 points, both spreads
// nonzero.
double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Objective evaluated over the plane through three states: x1 maps to the
// origin, e1 points at x2, e2 is the orthogonalized direction toward x3.
struct LandscapeSlice {
    Eigen::VectorXd origin, e1, e2;
    std::vector<double> alphas, betas;
    Eigen::MatrixXd values;                // (alpha index, beta index)
    Eigen::Matrix<double, 3, 2> anchor_coords;
};

LandscapeSlice landscape_slice(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                               const Eigen::VectorXd& x3,
                               const std::function<double(const Eigen::VectorXd&)>& objective,
                               int resolution, double margin, int threads = 0);

// Strict local minima against all existing 8-neighbors.
std::vector<std::pair<int, int>> find_local_minima(const Eigen::MatrixXd& values);

// Least-squares quadratic fit over the slice grid; returns the 2x2 Hessian.
Eigen::Matrix2d fit_quadratic_hessian(const LandscapeSlice& slice);

// Stage results. Every stage reads its inputs from files under out_dir
// written by earlier stages and persists its own outputs there, so the
// pipeline can be resumed or re-run piecewise; run_all chains them.
struct TruthArtifacts {
    Eigen::VectorXd x_true;
    Eigen::VectorXd d_clean;     // history rows, flattened
    Eigen::VectorXd d_obs;       // with observation noise
    Eigen::VectorXd forecast;    // water cut per producer at the forecast time
    double truth_misfit = 0.0;   // clean prediction against noisy data
    double breakthrough_median = 0.0;
};

struct PriorArtifacts {
    Eigen::MatrixXd anchors;        // column per member
    Eigen::MatrixXd perturbed_obs;  // column per member
};

struct AssimilationArtifacts {
    AssimilationResult result;
    Eigen::VectorXd misfit_obs, misfit_pert;
};

struct WeightArtifacts {
    WeightSet weights;
    Eigen::VectorXd misfit_obs;
    double correlation = 0.0;   // log-weight vs misfit
};

struct DenoiseArtifacts {
    NoiseModel model;
    WeightSet weights;          // denoised, renormalized
    double correlation = 0.0;
};

struct ForecastArtifacts {
    Eigen::MatrixXd member_forecasts;   // member rows, producer columns
    Eigen::VectorXd outcome;            // truth at the forecast time
};

struct SweepPoint {
    double exponent = 0.0;
    double ess = 0.0;
    double score = 0.0; // -log density of the field-level forecast
    double log_density = 0.0;
};

struct LandscapeArtifacts {
    LandscapeSlice slice;
};

TruthArtifacts run_truth_stage(const ExperimentConfig& cfg, const std::string& out_dir);
PriorArtifacts run_prior_stage(const ExperimentConfig& cfg, const std::string& out_dir);
AssimilationArtifacts run_assimilation_stage(const ExperimentConfig& cfg,
                                             const std::string& out_dir, Method method);
WeightArtifacts run_weight_stage(const ExperimentConfig& cfg, const std::string& out_dir,
                                 Method method);
DenoiseArtifacts run_denoise_stage(const ExperimentConfig& cfg, const std::string& out_dir,
                                   Method method);
ForecastArtifacts run_forecast_stage(const ExperimentConfig& cfg, const std::string& out_dir,
                                     Method method);
std::vector<SweepPoint> run_sweep_stage(const ExperimentConfig& cfg,
                                        const std::string& out_dir, Method method);
LandscapeArtifacts run_landscape_stage(const ExperimentConfig& cfg,
                                       const std::string& out_dir);
void run_all(const ExperimentConfig& cfg, const std::string& out_dir);

// CSV plumbing shared by the stages and the command line tool. Doubles are
// printed with %.17g so files round-trip exactly and reruns are
// byte-identical.
std::string format_double(double v);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows);
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd rows;
};
CsvTable read_csv(const std::string& path);

} // namespace wrml

#endif
