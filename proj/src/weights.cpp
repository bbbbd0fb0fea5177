#include "wrml/weights.hpp"

#include <cmath>

#include "wrml/linalg.hpp"

namespace wrml {

WeightSet finalize_weights(const Eigen::VectorXd& log_weights) {
    WeightSet ws;
    ws.log_weights = log_weights;
    const double lse = log_sum_exp(log_weights);
    ws.weights = (log_weights.array() - lse).exp();
    ws.ess = effective_sample_size(ws.weights);
    return ws;
}

double effective_sample_size(const Eigen::VectorXd& weights) {
    if (weights.size() == 0) throw DegenerateEnsemble("no weights");
    if ((weights.array() < 0.0).any())
        throw UnnormalizedWeights("negative weight");
    const double sum = weights.sum();
    if (std::abs(sum - 1.0) > 1e-9)
        throw UnnormalizedWeights("weights must sum to one");
    return 1.0 / weights.squaredNorm();
}

WeightTerms weight_terms(const Eigen::MatrixXd& gcxgt,
                         const Eigen::VectorXd& g_eval,
                         const Eigen::VectorXd& d_obs,
                         const Eigen::VectorXd& g_dx,
                         const Eigen::VectorXd& cd_diag) {
    const Eigen::Index nd = d_obs.size();
    if (gcxgt.rows() != nd || gcxgt.cols() != nd || g_eval.size() != nd ||
        g_dx.size() != nd || cd_diag.size() != nd)
        throw DimensionMismatch("weight term dimensions disagree");
    WeightTerms t;
    t.v = gcxgt;
    t.v.diagonal() += cd_diag;
    if (!t.v.allFinite()) throw NonFiniteInput("non-finite V");
    t.eta = g_eval - d_obs - g_dx;
    if (!t.eta.allFinite()) throw NonFiniteInput("non-finite eta");
    const SpdSolver solver(t.v);
    t.logdet_v = solver.log_det();
    t.logdet_j = t.logdet_v - cd_diag.array().log().sum();
    t.quad = t.eta.dot(solver.solve(t.eta));
    return t;
}

WeightSet ies_weights(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                      const AssimilationProblem& problem,
                      bool include_common_terms, InversePolicy policy,
                      WeightDiagnostics* diag) {
    const Eigen::Index ne = ens.members.cols();
    const Eigen::MatrixXd dx = deviations(ens.members);
    const Eigen::MatrixXd dd = deviations(predictions);

    Eigen::MatrixXd v = dd * dd.transpose();
    v.diagonal() += problem.cd_diag;
    const SpdSolver solver(v);
    const double logdet_v = solver.log_det();
    const double logdet_j = logdet_v - problem.cd_diag.array().log().sum();

    const Eigen::MatrixXd diff = ens.members.colwise() - problem.x_pr;
    const bool dense = (policy == InversePolicy::Dense) ||
                       (policy == InversePolicy::Auto &&
                        ens.members.rows() <= CovarianceOperator::dense_limit);
    Eigen::MatrixXd w = dense
                            ? Eigen::MatrixXd(dx.transpose() *
                                              problem.cov->apply_pinv(diff))
                            : TruncatedPinv(dx, 1e-6).apply(diff);

    Eigen::VectorXd lw(ne);
    Eigen::VectorXd quads(ne);
    for (Eigen::Index i = 0; i < ne; ++i) {
        const Eigen::VectorXd eta =
            predictions.col(i) - problem.d_obs - dd * w.col(i);
        quads[i] = eta.dot(solver.solve(eta));
        lw[i] = -0.5 * quads[i];
        if (include_common_terms) lw[i] += 0.5 * logdet_v - logdet_j;
    }
    if (diag) {
        diag->logdet_v = Eigen::VectorXd::Constant(ne, logdet_v);
        diag->logdet_j = Eigen::VectorXd::Constant(ne, logdet_j);
        diag->quad = quads;
    }
    return finalize_weights(lw);
}

WeightSet hybrid_weights(const Ensemble& ens, const Eigen::MatrixXd& predictions,
                         const AssimilationProblem& problem,
                         WeightDiagnostics* diag) {
    const Eigen::Index ne = ens.members.cols();
    const Eigen::Index nx = ens.members.rows();
    const Eigen::MatrixXd dd = deviations(predictions);
    Eigen::MatrixXd m_members(nx, ne);
    for (Eigen::Index i = 0; i < ne; ++i)
        m_members.col(i) = transform_forward(problem.transform, ens.members.col(i));
    const Eigen::MatrixXd p = TruncatedPinv(deviations(m_members), 1e-6).dense();

    Eigen::VectorXd lw(ne);
    WeightDiagnostics local;
    local.logdet_v.resize(ne);
    local.logdet_j.resize(ne);
    local.quad.resize(ne);
    const double logdet_cd = problem.cd_diag.array().log().sum();

    for (Eigen::Index i = 0; i < ne; ++i) {
        const Eigen::VectorXd mi =
            transform_sensitivity(problem.transform, ens.members.col(i));
        const Eigen::MatrixXd wi = p * mi.asDiagonal(); // (P M_i), N_e x N_m
        Eigen::MatrixXd cx_wt(nx, ne);
        for (Eigen::Index c = 0; c < ne; ++c)
            cx_wt.col(c) = problem.cov->apply(wi.row(c).transpose());
        const Eigen::MatrixXd core = wi * cx_wt;

        Eigen::MatrixXd v = dd * core * dd.transpose();
        v.diagonal() += problem.cd_diag;
        const SpdSolver solver(v);
        const double logdet_v = solver.log_det();
        const double logdet_j = logdet_v - logdet_cd;

        const Eigen::VectorXd diff = ens.members.col(i) - problem.x_pr;
        const Eigen::VectorXd eta = predictions.col(i) - problem.d_obs -
                                    dd * (p * mi.cwiseProduct(diff));
        const double quad = eta.dot(solver.solve(eta));

        lw[i] = 0.5 * logdet_v - 0.5 * quad - logdet_j;
        local.logdet_v[i] = logdet_v;
        local.logdet_j[i] = logdet_j;
        local.quad[i] = quad;
    }
    if (diag) *diag = std::move(local);
    return finalize_weights(lw);
}

} // namespace wrml
