#include <doctest.h>

#include <cmath>
#include <random>

#include "wrml/covariance.hpp"
#include "wrml/errors.hpp"
#include "wrml/weights.hpp"

using namespace wrml;

namespace {

Eigen::MatrixXd cov_sqrt(const CovarianceOperator& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.dense());
    Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

// +/- pair ensemble: scaled deviations reproduce C_x exactly.
Eigen::MatrixXd plus_minus_members(const Eigen::MatrixXd& l, const Eigen::VectorXd& mu) {
    const int n = static_cast<int>(l.cols());
    const int ne = 2 * n;
    const double a = std::sqrt((ne - 1) / 2.0);
    Eigen::MatrixXd m(l.rows(), ne);
    for (int j = 0; j < n; ++j) {
        m.col(2 * j) = mu + a * l.col(j);
        m.col(2 * j + 1) = mu - a * l.col(j);
    }
    return m;
}

struct LinearCase {
    Grid2D grid{3, 2, 0.3, 0.3};
    CovarianceOperator cov{CovarianceSpec{0.8, 1.1}, grid};
    Eigen::MatrixXd g;
    AssimilationProblem problem;
    Ensemble ens;
    Eigen::MatrixXd predictions;

    LinearCase() {
        std::mt19937_64 rng(101);
        std::normal_distribution<double> gauss;
        g.resize(4, grid.size());
        for (int i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);

        problem.cov = &cov;
        problem.x_pr = Eigen::VectorXd::Zero(grid.size());
        Eigen::VectorXd x_truth(grid.size());
        for (int i = 0; i < x_truth.size(); ++i) x_truth[i] = gauss(rng);
        problem.d_obs = g * x_truth;
        problem.cd_diag = Eigen::VectorXd::Constant(4, 4e-2);
        problem.transform = TransformKind::Identity;
        Eigen::MatrixXd gg = g;
        problem.predict_from_m = [gg](const Eigen::VectorXd& m) {
            return Eigen::VectorXd(gg * m);
        };
        problem.threads = 1;

        ens.anchors = plus_minus_members(cov_sqrt(cov), problem.x_pr);
        ens.members = ens.anchors;
        ens.perturbed_obs = problem.d_obs.replicate(1, ens.members.cols());
        predictions = g * ens.members;
    }
};

} // namespace

TEST_CASE("zero sensitivity reduces the weight terms to the data mismatch") {
    Eigen::VectorXd g_eval(3), d_obs(3), cd(3);
    g_eval << 1.0, 2.0, 3.0;
    d_obs << 1.5, 2.0, 1.0;
    cd << 0.25, 1.0, 4.0;
    WeightTerms t = weight_terms(Eigen::MatrixXd::Zero(3, 3), g_eval, d_obs,
                                 Eigen::VectorXd::Zero(3), cd);
    CHECK(t.logdet_v == doctest::Approx(cd.array().log().sum()).epsilon(1e-14));
    CHECK(t.logdet_j == doctest::Approx(0.0).epsilon(1e-14));
    double want_quad = ((g_eval - d_obs).array().square() / cd.array()).sum();
    CHECK(t.quad == doctest::Approx(want_quad).epsilon(1e-14));
    CHECK((t.eta - (g_eval - d_obs)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("the jacobian log-determinant matches the latent-space form") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    for (int rep = 0; rep < 5; ++rep) {
        int nx = 3 + rep % 4, nd = 2 + rep % 3;
        Eigen::MatrixXd g(nd, nx), l(nx, nx);
        for (int i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
        for (int i = 0; i < l.size(); ++i) l.data()[i] = gauss(rng);
        Eigen::MatrixXd cx = l * l.transpose();
        Eigen::VectorXd cd(nd);
        for (int i = 0; i < nd; ++i) cd[i] = 0.1 + std::abs(gauss(rng));

        WeightTerms t =
            weight_terms(g * cx * g.transpose(), Eigen::VectorXd::Zero(nd),
                         Eigen::VectorXd::Zero(nd), Eigen::VectorXd::Zero(nd), cd);
        // reference: log det(I_nx + C_x G^T C_d^-1 G)
        Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(nx, nx) +
                              cx * g.transpose() * cd.cwiseInverse().asDiagonal() * g;
        double want = std::log(jac.determinant());
        CHECK(t.logdet_j == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("linear problems earn uniform importance weights") {
    LinearCase c;
    WeightSet hybrid = hybrid_weights(c.ens, c.predictions, c.problem);
    WeightSet ies_sub = ies_weights(c.ens, c.predictions, c.problem, false,
                                    InversePolicy::Subspace);
    WeightSet ies_dense = ies_weights(c.ens, c.predictions, c.problem, false,
                                      InversePolicy::Dense);
    const double ne = static_cast<double>(c.ens.members.cols());
    for (const WeightSet* ws : {&hybrid, &ies_sub, &ies_dense}) {
        CHECK(ws->ess == doctest::Approx(ne).epsilon(1e-8));
        CHECK((ws->weights.array() - 1.0 / ne).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("hybrid weights equal plain weights with common terms on a matched ensemble") {
    LinearCase c;
    WeightDiagnostics dh, di;
    WeightSet hybrid = hybrid_weights(c.ens, c.predictions, c.problem, &dh);
    WeightSet ies = ies_weights(c.ens, c.predictions, c.problem, true,
                                InversePolicy::Subspace, &di);
    REQUIRE(hybrid.log_weights.size() == ies.log_weights.size());
    for (int i = 0; i < hybrid.log_weights.size(); ++i)
        CHECK(hybrid.log_weights[i] == doctest::Approx(ies.log_weights[i]).epsilon(1e-6));
    for (int i = 0; i < dh.logdet_v.size(); ++i) {
        CHECK(dh.logdet_v[i] == doctest::Approx(di.logdet_v[i]).epsilon(1e-8));
        // the jacobian identity log J = log|V| - log|C_d| holds member-wise
        double want = dh.logdet_v[i] - c.problem.cd_diag.array().log().sum();
        CHECK(dh.logdet_j[i] == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("common terms only shift the normalized weights") {
    LinearCase c;
    // push one member off its minimizer so weights are not all equal
    Ensemble ens = c.ens;
    ens.members.col(0).array() += 0.4;
    Eigen::MatrixXd pred = c.g * ens.members;
    WeightSet bare = ies_weights(ens, pred, c.problem, false);
    WeightSet full = ies_weights(ens, pred, c.problem, true);
    CHECK((bare.weights - full.weights).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(bare.ess == doctest::Approx(full.ess).epsilon(1e-10));
    // and the shifted member took a different weight than the rest
    CHECK(std::abs(bare.weights[0] - bare.weights[1]) > 1e-12);
}

TEST_CASE("effective sample size has the textbook limits") {
    Eigen::VectorXd even(5);
    even.setConstant(0.2);
    CHECK(effective_sample_size(even) == doctest::Approx(5.0));

    Eigen::VectorXd two(4);
    two << 0.5, 0.5, 0.0, 0.0;
    CHECK(effective_sample_size(two) == doctest::Approx(2.0));

    Eigen::VectorXd one(4);
    one << 1.0, 0.0, 0.0, 0.0;
    CHECK(effective_sample_size(one) == doctest::Approx(1.0));

    Eigen::VectorXd bad(3);
    bad << 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(effective_sample_size(bad), UnnormalizedWeights);
}

TEST_CASE("finalize_weights is shift invariant and matches the analytic ess") {
    Eigen::VectorXd lw(4);
    lw << 0.0, -1.0, -2.0, -3.0;
    WeightSet a = finalize_weights(lw);
    WeightSet b = finalize_weights(lw.array() + 500.0);
    CHECK((a.weights - b.weights).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK(a.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.ess == doctest::Approx(1.0 / a.weights.squaredNorm()));
    // degenerate spike
    Eigen::VectorXd spike(3);
    spike << 0.0, -1e9, -1e9;
    CHECK(finalize_weights(spike).ess == doctest::Approx(1.0));
}
