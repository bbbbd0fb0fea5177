#include "wrml/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wrml {

namespace {

void validate(const NoiseModel& model) {
    if (!(model.sigma_o >= 0.0) || !std::isfinite(model.sigma_o))
        throw ConfigError("sigma_o must be nonnegative");
    if (!(model.sigma_pr > 0.0)) throw ConfigError("sigma_pr must be positive");
    if (!(model.nu >= 1.0)) throw ConfigError("nu must be >= 1");
    if (!std::isfinite(model.omega_pr))
        throw NonFiniteInput("omega_pr must be finite");
}

} // namespace

double denoise_log_posterior(const NoiseModel& model, double omega,
                             double omega_obs) {
    validate(model);
    if (!std::isfinite(omega_obs)) throw NonFiniteInput("omega_obs not finite");
    const double u = omega - model.omega_pr;
    if (u <= 0.0) return -std::numeric_limits<double>::infinity();
    double lp = (model.nu / 2.0 - 1.0) * std::log(u / model.sigma_pr) -
                u / (2.0 * model.sigma_pr);
    if (model.sigma_o > 0.0) {
        const double r = omega - omega_obs;
        lp -= r * r / (2.0 * model.sigma_o * model.sigma_o);
    }
    return lp;
}

double denoise_map(const NoiseModel& model, double omega_obs) {
    validate(model);
    if (!std::isfinite(omega_obs)) throw NonFiniteInput("omega_obs not finite");
    const double eps = 1e-12 * std::max(1.0, std::abs(model.omega_pr));

    if (model.sigma_o == 0.0) // no noise: posterior is a point mass
        return std::max(omega_obs, model.omega_pr + eps);

    if (model.nu < 2.0) {
        // density unbounded at the boundary; take the interior stationary
        // point when the derivative has a sign change, else project.
        const double so2 = model.sigma_o * model.sigma_o;
        const double c = (omega_obs - model.omega_pr) - so2 / (2.0 * model.sigma_pr);
        const double k = so2 * (model.nu / 2.0 - 1.0); // negative here
        const double disc = c * c + 4.0 * k;
        if (c > 0.0 && disc > 0.0) {
            const double u = 0.5 * (c + std::sqrt(disc));
            return model.omega_pr + u;
        }
        return std::max(omega_obs, model.omega_pr + eps);
    }

    // nu >= 2: the log posterior is strictly concave on the support and
    // stationarity in u = omega - omega_pr is the quadratic
    //   u^2 + (sigma_o^2 / (2 sigma_pr) - (omega_obs - omega_pr)) u
    //       - sigma_o^2 (nu/2 - 1) = 0
    // whose nonnegative root is the maximizer. Working in u keeps the result
    // shift equivariant; the rearranged root avoids cancellation when the
    // linear coefficient dominates the constant term.
    const double so2 = model.sigma_o * model.sigma_o;
    const double c = (omega_obs - model.omega_pr) - so2 / (2.0 * model.sigma_pr);
    const double k = so2 * (model.nu / 2.0 - 1.0); // >= 0 here
    const double disc = c * c + 4.0 * k;
    double u;
    if (c > 0.0)
        u = 0.5 * (c + std::sqrt(disc));
    else
        u = k > 0.0 ? 2.0 * k / (std::sqrt(disc) - c) : 0.0;
    return model.omega_pr + std::max(u, eps);
}

Eigen::VectorXd denoise_log_weights(const NoiseModel& model,
                                    const Eigen::VectorXd& log_weights) {
    Eigen::VectorXd out(log_weights.size());
    for (Eigen::Index i = 0; i < log_weights.size(); ++i)
        out[i] = denoise_map(model, log_weights[i]);
    return out;
}

double default_omega_pr(const Eigen::VectorXd& log_weights, double sigma_pr,
                        double nu, double sigma_o) {
    if (log_weights.size() == 0) throw DegenerateEnsemble("no log weights");
    const double heuristic = log_weights.maxCoeff() - 6.0 * sigma_pr * nu;
    return std::min(heuristic, log_weights.minCoeff() - sigma_o);
}

double fit_noise_sigma(const Eigen::VectorXd& omega_replicates) {
    const Eigen::Index n = omega_replicates.size();
    if (n < 3)
        throw InsufficientReplicates("need at least 3 replicate ensembles");
    if (!omega_replicates.allFinite())
        throw NonFiniteInput("non-finite replicate log-weight");
    const double mean = omega_replicates.mean();
    const double ss = (omega_replicates.array() - mean).square().sum();
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw DegenerateEnsemble("empty KS sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        // step past every copy of the smaller value in both samples before
        // comparing the empirical CDFs, so ties never register as a gap
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        const double fa = static_cast<double>(i) / a.size();
        const double fb = static_cast<double>(j) / b.size();
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

NoiseModel tune_prior(const Eigen::VectorXd& log_weights, double sigma_o,
                      const PriorCandidates& candidates, int n_sim,
                      std::mt19937_64& rng) {
    if (candidates.sigma_pr.empty() || candidates.nu.empty() ||
        candidates.omega_pr.empty())
        throw ConfigError("prior candidate grid is empty");
    if (n_sim < 100) throw ConfigError("too few simulated draws to tune prior");
    std::vector<double> observed(log_weights.data(),
                                 log_weights.data() + log_weights.size());

    NoiseModel best;
    double best_ks = std::numeric_limits<double>::infinity();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double nu : candidates.nu) {
        std::gamma_distribution<double> chi2(nu / 2.0, 2.0);
        for (double spr : candidates.sigma_pr)
            for (double opr : candidates.omega_pr) {
                std::vector<double> sim(n_sim);
                for (int k = 0; k < n_sim; ++k)
                    sim[k] = opr + spr * chi2(rng) + sigma_o * gauss(rng);
                const double ks = ks_statistic(sim, observed);
                if (ks < best_ks) {
                    best_ks = ks;
                    best = NoiseModel{sigma_o, spr, nu, opr};
                }
            }
    }
    return best;
}

WeightSet power_regularize(const Eigen::VectorXd& log_weights, double exponent) {
    if (!(exponent >= 0.0) || !(exponent <= 1.0))
        throw ConfigError("power exponent must lie in [0,1]");
    const double shift = log_weights.maxCoeff();
    return finalize_weights(exponent * (log_weights.array() - shift));
}

} // namespace wrml
