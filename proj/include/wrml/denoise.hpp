#ifndef WRML_DENOISE_HPP
#define WRML_DENOISE_HPP

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "wrml/weights.hpp"

namespace wrml {

// Sampling noise in computed log-weights omega is modeled as Gaussian around
// the true value, with a shifted/scaled chi-square prior for the true value:
//   p(omega | omega_obs) propto exp(-(omega-omega_obs)^2 / (2 sigma_o^2))
//     * ((omega-omega_pr)/sigma_pr)^(nu/2-1) * exp(-(omega-omega_pr)/(2 sigma_pr))
// for omega > omega_pr, zero otherwise. Each observed log-weight is replaced
// by the MAP of this posterior.
struct NoiseModel {
    double sigma_o = 1.0;  // noise std of observed log-weights
    double sigma_pr = 1.0; // prior scale
    double nu = 3.0;       // prior shape (degrees of freedom)
    double omega_pr = 0.0; // prior support lower bound
};

// Log posterior density (unnormalized); -inf at or below omega_pr.
double denoise_log_posterior(const NoiseModel& model, double omega,
                             double omega_obs);

// MAP of the posterior for one observed log-weight. Unimodal for nu >= 2
// (bracketed golden-section search); for nu < 2 the density blows up at the
// support boundary, so the interior stationary point is returned if one
// exists, else omega_obs projected into the support.
double denoise_map(const NoiseModel& model, double omega_obs);

// Applies denoise_map to every log-weight.
Eigen::VectorXd denoise_log_weights(const NoiseModel& model,
                                    const Eigen::VectorXd& log_weights);

// Default support bound: max(omega) - 6 sigma_pr nu, clipped to stay below
// min(omega) - sigma_o so every observation lies inside the support.
double default_omega_pr(const Eigen::VectorXd& log_weights, double sigma_pr,
                        double nu, double sigma_o);

// Sample standard deviation of one member's final log-weight across replicate
// ensembles; at least 3 replicates required.
double fit_noise_sigma(const Eigen::VectorXd& omega_replicates);

// Two-sample Kolmogorov-Smirnov statistic, max |F1 - F2|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

struct PriorCandidates {
    std::vector<double> sigma_pr;
    std::vector<double> nu;
    std::vector<double> omega_pr;
};

// Trial-and-error prior calibration: for every candidate (sigma_pr, nu,
// omega_pr) simulate n_sim noisy draws omega = omega_pr + sigma_pr * chi2(nu)
// + N(0, sigma_o^2) and keep the candidate whose draws are closest to the
// observed log-weights in KS distance.
NoiseModel tune_prior(const Eigen::VectorXd& log_weights, double sigma_o,
                      const PriorCandidates& candidates, int n_sim,
                      std::mt19937_64& rng);

// Power-transform regularization: log-weights scaled by exponent in [0,1]
// (0 = uniform, 1 = unchanged), then renormalized.
WeightSet power_regularize(const Eigen::VectorXd& log_weights, double exponent);

} // namespace wrml

#endif
