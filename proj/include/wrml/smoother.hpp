#ifndef WRML_SMOOTHER_HPP
#define WRML_SMOOTHER_HPP

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

#include "wrml/covariance.hpp"
#include "wrml/transforms.hpp"

namespace wrml {

// The inverse problem: latent Gaussian x with prior N(x_pr, C_x), pointwise
// transform to log-permeability m, data predicted from m, independent
// Gaussian observation errors (diagonal C_d).
struct AssimilationProblem {
    const CovarianceOperator* cov = nullptr;
    Eigen::VectorXd x_pr;
    Eigen::VectorXd d_obs;
    Eigen::VectorXd cd_diag;
    TransformKind transform = TransformKind::Identity;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> predict_from_m;
    int threads = 0; // forward-model evaluation; 0 = hardware concurrency

    Eigen::VectorXd predict(const Eigen::VectorXd& x) const {
        return predict_from_m(transform_forward(transform, x));
    }
};

// Members are iterated in place; anchors x'_i and perturbed observations
// delta*_i = d_obs + C_d^{1/2} eps_i define each member's stochastic cost
//   O_i(x) = 1/2|x - x'_i|^2_{C_x^-1} + 1/2|g(m) - delta*_i|^2_{C_d^-1}.
struct Ensemble {
    Eigen::MatrixXd members;       // N_x x N_e
    Eigen::MatrixXd anchors;       // N_x x N_e
    Eigen::MatrixXd perturbed_obs; // N_d x N_e
};

Ensemble init_ensemble(const AssimilationProblem& problem, int ensemble_size,
                       std::mt19937_64& rng);

// Evaluates the forward model for every member (in parallel). Columns line up
// with members; results are bitwise independent of the thread count.
Eigen::MatrixXd evaluate_ensemble(const AssimilationProblem& problem,
                                  const Eigen::MatrixXd& members);

// 1/2 r^T C_d^-1 r per member column.
Eigen::VectorXd member_misfits(const Eigen::MatrixXd& predictions,
                               const Eigen::MatrixXd& reference,
                               const Eigen::VectorXd& cd_diag);
double misfit(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed,
              const Eigen::VectorXd& cd_diag);

// Route for products with C_x^{-1}: the dense pseudo-inverse (small grids) or
// the ensemble-subspace projection through pinv(dev(x)) (large grids).
enum class InversePolicy { Auto, Dense, Subspace };

// One damped Gauss-Newton step per member in ensemble-deviation form. All
// members share the (1+lambda) C_d + dev(d) dev(d)^T solve.
Eigen::MatrixXd ies_update(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                           const Eigen::VectorXd& cd_diag, double lambda,
                           const CovarianceOperator& cov,
                           InversePolicy policy = InversePolicy::Auto);

// Hybrid step: the data-mismatch gradient keeps the ensemble-estimated
// sensitivity dev(d) pinv(dev(m)) chained with each member's exact transform
// Jacobian M_x, while prior terms use the exact C_x (FFT products). The
// per-member (1+lambda) C_d + G C_x G^T system is built in the N_e-dimensional
// ensemble subspace before expanding to data space.
Eigen::MatrixXd hybrid_update(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                              const Eigen::VectorXd& cd_diag, double lambda,
                              const CovarianceOperator& cov, TransformKind transform);

enum class Method { IES, Hybrid };

Method method_from_string(const std::string& name);
std::string to_string(Method m);

struct LMSchedule {
    double gamma = 5.0;      // lambda /= gamma on accept, *= gamma on reject
    double lambda0 = -1.0;   // < 0: mean initial misfit / N_d
    int max_iterations = 50; // proposal trials
    double rel_tol = 0.01;   // relative mean-misfit change counted as stalled
    int tol_streak = 2;      // consecutive small-change acceptances to stop
    int max_rejections = 5;  // consecutive rejections to stop
};

struct IterationRecord {
    int iteration = 0;
    double lambda = 0.0;
    double mean_misfit = 0.0;     // vs each member's perturbed observations
    double mean_misfit_obs = 0.0; // vs d_obs, diagnostic
    bool accepted = false;
};

struct AssimilationResult {
    Ensemble ensemble;
    Eigen::MatrixXd predictions; // at the final members
    std::vector<IterationRecord> iterations;
    bool converged = false;
    bool hit_max_iterations = false;
    int rejected_streak_stop = 0; // nonzero if stopped by rejections
};

// Levenberg-Marquardt loop: propose with the current lambda, accept when the
// ensemble-mean misfit (vs perturbed observations) decreases, roll back and
// raise lambda otherwise. Stops after `tol_streak` consecutive accepted
// iterations with relative change < rel_tol, `max_rejections` consecutive
// rejections, or max_iterations trials (then hit_max_iterations is set and
// the best ensemble so far is returned).
AssimilationResult run_assimilation(const AssimilationProblem& problem,
                                    Method method, const LMSchedule& schedule,
                                    Ensemble ensemble,
                                    InversePolicy policy = InversePolicy::Auto);

} // namespace wrml

#endif
