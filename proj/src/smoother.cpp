#include "wrml/smoother.hpp"

#include <cmath>

#include "wrml/linalg.hpp"

namespace wrml {

Method method_from_string(const std::string& name) {
    if (name == "ies") return Method::IES;
    if (name == "hybrid") return Method::Hybrid;
    throw ConfigError("unknown method: " + name);
}

std::string to_string(Method m) {
    return m == Method::IES ? "ies" : "hybrid";
}

Ensemble init_ensemble(const AssimilationProblem& problem, int ensemble_size,
                       std::mt19937_64& rng) {
    if (ensemble_size < 2) throw ConfigError("ensemble size must be >= 2");
    if (!problem.cov) throw ConfigError("problem has no covariance operator");
    const Eigen::Index nd = problem.d_obs.size();
    if (problem.cd_diag.size() != nd)
        throw DimensionMismatch("C_d diagonal does not match observations");
    if ((problem.cd_diag.array() <= 0.0).any())
        throw ConfigError("observation error variances must be positive");

    Ensemble ens;
    ens.anchors = problem.cov->sample(rng, ensemble_size, problem.x_pr);
    ens.members = ens.anchors;
    ens.perturbed_obs.resize(nd, ensemble_size);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int c = 0; c < ensemble_size; ++c)
        for (Eigen::Index r = 0; r < nd; ++r)
            ens.perturbed_obs(r, c) =
                problem.d_obs[r] + std::sqrt(problem.cd_diag[r]) * gauss(rng);
    return ens;
}

Eigen::MatrixXd evaluate_ensemble(const AssimilationProblem& problem,
                                  const Eigen::MatrixXd& members) {
    const int ne = static_cast<int>(members.cols());
    Eigen::MatrixXd pred(problem.d_obs.size(), ne);
    parallel_for(ne, problem.threads, [&](int i) {
        Eigen::VectorXd d = problem.predict(members.col(i));
        if (d.size() != problem.d_obs.size())
            throw DimensionMismatch("forward model returned wrong data length");
        pred.col(i) = d;
    });
    return pred;
}

double misfit(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed,
              const Eigen::VectorXd& cd_diag) {
    if (predicted.size() != observed.size() || predicted.size() != cd_diag.size())
        throw DimensionMismatch("misfit length mismatch");
    return 0.5 * ((predicted - observed).array().square() / cd_diag.array()).sum();
}

Eigen::VectorXd member_misfits(const Eigen::MatrixXd& predictions,
                               const Eigen::MatrixXd& reference,
                               const Eigen::VectorXd& cd_diag) {
    Eigen::VectorXd out(predictions.cols());
    for (Eigen::Index i = 0; i < predictions.cols(); ++i) {
        const Eigen::VectorXd ref =
            reference.cols() == 1 ? reference.col(0) : reference.col(i);
        out[i] = misfit(predictions.col(i), ref, cd_diag);
    }
    return out;
}

namespace {

bool use_dense_inverse(InversePolicy policy, Eigen::Index nx) {
    switch (policy) {
        case InversePolicy::Dense: return true;
        case InversePolicy::Subspace: return false;
        case InversePolicy::Auto: return nx <= CovarianceOperator::dense_limit;
    }
    return true;
}

constexpr double kEnsemblePinvCutoff = 1e-6;

} // namespace

Eigen::MatrixXd ies_update(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                           const Eigen::VectorXd& cd_diag, double lambda,
                           const CovarianceOperator& cov, InversePolicy policy) {
    const Eigen::Index ne = ens.members.cols();
    if (predictions.cols() != ne || ens.anchors.cols() != ne ||
        ens.perturbed_obs.cols() != ne)
        throw DimensionMismatch("ensemble column counts disagree");
    const double damp = 1.0 / (1.0 + lambda);

    const Eigen::MatrixXd dx = deviations(ens.members);
    const Eigen::MatrixXd dd = deviations(predictions);
    const Eigen::MatrixXd diff = ens.members - ens.anchors;

    // W = dev(x)^T C_x^+ (x - x') on small grids; the ensemble-subspace
    // projection pinv(dev(x)) (x - x') otherwise. Either way the prior pull
    // becomes dev(x) * W and the chained data term dev(d) * W.
    Eigen::MatrixXd w;
    if (use_dense_inverse(policy, ens.members.rows())) {
        w = dx.transpose() * cov.apply_pinv(diff);
    } else {
        w = TruncatedPinv(dx, kEnsemblePinvCutoff).apply(diff);
    }

    Eigen::MatrixXd v = (dd * dd.transpose());
    v.diagonal() += (1.0 + lambda) * cd_diag;
    const SpdSolver solver(v);

    const Eigen::MatrixXd resid =
        predictions - ens.perturbed_obs - damp * (dd * w);
    return ens.members - damp * (dx * w) -
           dx * (dd.transpose() * solver.solve(resid));
}

Eigen::MatrixXd hybrid_update(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                              const Eigen::VectorXd& cd_diag, double lambda,
                              const CovarianceOperator& cov, TransformKind transform) {
    const Eigen::Index ne = ens.members.cols();
    const Eigen::Index nx = ens.members.rows();
    if (predictions.cols() != ne || ens.anchors.cols() != ne ||
        ens.perturbed_obs.cols() != ne)
        throw DimensionMismatch("ensemble column counts disagree");
    const double damp = 1.0 / (1.0 + lambda);

    const Eigen::MatrixXd dd = deviations(predictions);
    Eigen::MatrixXd m_members(nx, ne);
    for (Eigen::Index i = 0; i < ne; ++i)
        m_members.col(i) = transform_forward(transform, ens.members.col(i));
    const TruncatedPinv dm_pinv(deviations(m_members), kEnsemblePinvCutoff);
    const Eigen::MatrixXd p = dm_pinv.dense(); // N_e x N_m

    Eigen::MatrixXd out(nx, ne);
    for (Eigen::Index i = 0; i < ne; ++i) {
        const Eigen::VectorXd mi =
            transform_sensitivity(transform, ens.members.col(i));
        const Eigen::VectorXd diff = ens.members.col(i) - ens.anchors.col(i);

        // G_i = dev(d) pinv(dev(m)) M_i; the inner matrix G_i C_x G_i^T is
        // assembled through the N_e x N_e core (P M_i) C_x (P M_i)^T.
        const Eigen::MatrixXd wi = p * mi.asDiagonal(); // N_e x N_m
        Eigen::MatrixXd cx_wt(nx, ne);
        for (Eigen::Index c = 0; c < ne; ++c)
            cx_wt.col(c) = cov.apply(wi.row(c).transpose());
        const Eigen::MatrixXd core = wi * cx_wt; // (P M_i) C_x (P M_i)^T

        Eigen::MatrixXd v = dd * core * dd.transpose();
        v.diagonal() += (1.0 + lambda) * cd_diag;
        const SpdSolver solver(v);

        const Eigen::VectorXd g_diff = dd * (p * mi.cwiseProduct(diff));
        const Eigen::VectorXd resid =
            predictions.col(i) - ens.perturbed_obs.col(i) - damp * g_diff;
        const Eigen::VectorXd u = solver.solve(resid);
        const Eigen::VectorXd gain =
            cov.apply(mi.cwiseProduct(p.transpose() * (dd.transpose() * u)));
        out.col(i) = ens.members.col(i) - damp * diff - gain;
    }
    return out;
}

AssimilationResult run_assimilation(const AssimilationProblem& problem,
                                    Method method, const LMSchedule& schedule,
                                    Ensemble ensemble, InversePolicy policy) {
    if (schedule.gamma <= 1.0) throw ConfigError("LM gamma must exceed 1");
    AssimilationResult result;
    const Eigen::Index nd = problem.d_obs.size();

    Eigen::MatrixXd predictions = evaluate_ensemble(problem, ensemble.members);
    double mean_misfit =
        member_misfits(predictions, ensemble.perturbed_obs, problem.cd_diag).mean();
    double lambda = schedule.lambda0 > 0.0
                        ? schedule.lambda0
                        : mean_misfit / static_cast<double>(nd);

    int streak = 0;
    int rejections = 0;
    for (int iter = 1; iter <= schedule.max_iterations; ++iter) {
        Ensemble trial = ensemble;
        trial.members =
            method == Method::IES
                ? ies_update(ensemble, predictions, problem.cd_diag, lambda,
                             *problem.cov, policy)
                : hybrid_update(ensemble, predictions, problem.cd_diag, lambda,
                                *problem.cov, problem.transform);
        const Eigen::MatrixXd trial_pred =
            evaluate_ensemble(problem, trial.members);
        const double trial_misfit =
            member_misfits(trial_pred, ensemble.perturbed_obs, problem.cd_diag)
                .mean();

        IterationRecord rec;
        rec.iteration = iter;
        rec.lambda = lambda;
        rec.mean_misfit = trial_misfit;
        rec.mean_misfit_obs =
            member_misfits(trial_pred, problem.d_obs, problem.cd_diag).mean();
        rec.accepted = trial_misfit < mean_misfit;
        result.iterations.push_back(rec);

        if (rec.accepted) {
            const double rel = std::abs(mean_misfit - trial_misfit) /
                               std::max(mean_misfit, 1e-300);
            ensemble.members = std::move(trial.members);
            predictions = trial_pred;
            mean_misfit = trial_misfit;
            lambda /= schedule.gamma;
            rejections = 0;
            streak = (rel < schedule.rel_tol) ? streak + 1 : 0;
            if (streak >= schedule.tol_streak) {
                result.converged = true;
                break;
            }
        } else {
            lambda *= schedule.gamma;
            if (++rejections >= schedule.max_rejections) {
                result.rejected_streak_stop = rejections;
                break;
            }
        }
    }
    if (!result.converged && result.rejected_streak_stop == 0)
        result.hit_max_iterations = true;

    result.ensemble = std::move(ensemble);
    result.predictions = std::move(predictions);
    return result;
}

} // namespace wrml
