#ifndef WRML_WEIGHTS_HPP
#define WRML_WEIGHTS_HPP

#include <Eigen/Dense>

#include "wrml/covariance.hpp"
#include "wrml/smoother.hpp"

namespace wrml {

// Importance weights correct converged minimizers toward the posterior:
//   w(x) propto |V|^{1/2} exp(-1/2 eta^T V^-1 eta) / J,
// V = C_d + G C_x G^T, eta = g(m) - d_obs - G (x - x_pr), and J the Jacobian
// |I_{N_x} + C_x G^T C_d^-1 G| of the residual-to-sample map. J is always
// evaluated through the N_d-sized identity log J = log|V| - log|C_d|, which
// makes the assembled log-weight equal -1/2 log|V| - 1/2 eta^T V^-1 eta up to
// the member-independent log|C_d|.
struct WeightSet {
    Eigen::VectorXd log_weights; // as assembled (common constants included)
    Eigen::VectorXd weights;     // normalized
    double ess = 0.0;            // 1 / sum(w^2)
};

// Per-member diagnostics of the weight assembly.
struct WeightDiagnostics {
    Eigen::VectorXd logdet_v;
    Eigen::VectorXd logdet_j;
    Eigen::VectorXd quad; // eta^T V^-1 eta
};

// Normalizes log-weights stably and computes the Kong effective sample size.
WeightSet finalize_weights(const Eigen::VectorXd& log_weights);

// 1 / sum(w_k^2); requires normalized weights (sum 1 within 1e-9).
double effective_sample_size(const Eigen::VectorXd& weights);

// Assembles V, eta, and the log-determinants for one member given the
// sensitivity products. gcxgt = G C_x G^T, g_dx = G (x - x_pr).
struct WeightTerms {
    Eigen::MatrixXd v;
    Eigen::VectorXd eta;
    double logdet_v = 0.0;
    double logdet_j = 0.0;
    double quad = 0.0;
};

WeightTerms weight_terms(const Eigen::MatrixXd& gcxgt,
                         const Eigen::VectorXd& g_eval,
                         const Eigen::VectorXd& d_obs,
                         const Eigen::VectorXd& g_dx,
                         const Eigen::VectorXd& cd_diag);

// Weights for a converged plain-IES ensemble. The ensemble-wide sensitivity
// estimates G C_x G^T ~ dev(d) dev(d)^T and G ~ dev(d) dev(x)^T C_x^+ make V
// and J identical across members, so by default only the member-dependent
// quadratic form enters the log-weight; include_common_terms = true adds the
// shared 1/2 log|V| - log J for comparison studies.
WeightSet ies_weights(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                      const AssimilationProblem& problem,
                      bool include_common_terms = false,
                      InversePolicy policy = InversePolicy::Auto,
                      WeightDiagnostics* diag = nullptr);

// Hybrid weights: G_i = dev(d) pinv(dev(m)) M_i varies per member through the
// exact transform Jacobian, so V, eta, and J are all member-dependent and the
// full formula is kept.
WeightSet hybrid_weights(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                         const AssimilationProblem& problem,
                         WeightDiagnostics* diag = nullptr);

} // namespace wrml

#endif
