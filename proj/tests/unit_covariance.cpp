#include <doctest.h>

#include <cmath>
#include <random>

#include "wrml/covariance.hpp"
#include "wrml/errors.hpp"

using namespace wrml;

namespace {

// Brute-force kernel matrix from node coordinates, independent of the FFT
// machinery.
Eigen::MatrixXd dense_reference(const CovarianceSpec& spec, const Grid2D& g) {
    Eigen::MatrixXd c(g.size(), g.size());
    for (int j2 = 0; j2 < g.ny_plus1; ++j2)
        for (int i2 = 0; i2 < g.nx_plus1; ++i2)
            for (int j1 = 0; j1 < g.ny_plus1; ++j1)
                for (int i1 = 0; i1 < g.nx_plus1; ++i1)
                    c(g.index(i1, j1), g.index(i2, j2)) = covariance_value(
                        spec, (i1 - i2) * g.hx, (j1 - j2) * g.hy);
    return c;
}

} // namespace

TEST_CASE("kernel values match the closed form") {
    CovarianceSpec spec{0.8, 1.1};
    CHECK(covariance_value(spec, 0.0, 0.0) == doctest::Approx(0.64).epsilon(1e-15));
    // frozen reference: sigma^2 (1 - r2/rho^2) exp(-r2/rho^2) at lag (0.05, 0.05)
    CHECK(covariance_value(spec, 0.05, 0.05) ==
          doctest::Approx(0.6347271060581425).epsilon(1e-15));
    // the negative lobe: r2 > rho^2
    CHECK(covariance_value(spec, 1.2, 0.0) < 0.0);
    // symmetric in both arguments and their signs
    CHECK(covariance_value(spec, 0.3, -0.7) == covariance_value(spec, -0.3, 0.7));
    CHECK(covariance_value(spec, 0.3, 0.7) == covariance_value(spec, 0.7, 0.3));
}

TEST_CASE("fft application equals the dense matrix product") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    for (auto [nx, ny, h] : {std::tuple{1, 1, 0.7}, {3, 2, 0.4}, {7, 7, 0.15}}) {
        Grid2D g(nx + 1, ny + 1, h, h);
        CovarianceSpec spec{0.8, 1.1};
        CovarianceOperator cov(spec, g);
        Eigen::MatrixXd ref = dense_reference(spec, g);
        for (int rep = 0; rep < 8; ++rep) {
            Eigen::VectorXd v(g.size());
            for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
            Eigen::VectorXd got = cov.apply(v);
            Eigen::VectorXd want = ref * v;
            CHECK((got - want).lpNorm<Eigen::Infinity>() <=
                  1e-10 * v.lpNorm<Eigen::Infinity>());
        }
        CHECK((cov.dense() - ref).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("application stays exact when the embedding is indefinite") {
    // A correlation length far beyond the embedding size cap keeps the
    // surrogate spectrum indefinite at every feasible torus size;
    // multiplication must not care.
    Grid2D g(2, 2, 1.0, 1.0);
    CovarianceSpec spec{1.0, 1000.0};
    CovarianceOperator cov(spec, g);
    CHECK_FALSE(cov.embedding().nonnegative);
    CHECK(cov.embedding().doubled);
    Eigen::MatrixXd ref = dense_reference(spec, g);
    Eigen::VectorXd v(4);
    v << 0.3, -1.2, 0.05, 2.0;
    CHECK((cov.apply(v) - ref * v).lpNorm<Eigen::Infinity>() < 1e-12);
    // sampling, however, has no valid spectral square root here
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(cov.sample(rng, 2, Eigen::VectorXd::Zero(4)),
                    NonPositiveEmbedding);
}

TEST_CASE("sample moments converge to the kernel") {
    Grid2D g(4, 4, 0.25, 0.25);
    CovarianceSpec spec{0.8, 1.1};
    CovarianceOperator cov(spec, g);
    std::mt19937_64 rng(17);
    const int n = 20000;
    Eigen::VectorXd mean = Eigen::VectorXd::Constant(g.size(), 1.5);
    Eigen::MatrixXd s = cov.sample(rng, n, mean);
    REQUIRE(s.rows() == g.size());
    REQUIRE(s.cols() == n);
    Eigen::VectorXd mu = s.rowwise().mean();
    CHECK((mu.array() - 1.5).abs().maxCoeff() < 0.05);
    Eigen::MatrixXd centered = s.colwise() - mu;
    Eigen::MatrixXd emp = centered * centered.transpose() / (n - 1);
    CHECK((emp - cov.dense()).lpNorm<Eigen::Infinity>() < 0.05);
}

TEST_CASE("samples are deterministic in the seed and consume pairs per fft") {
    Grid2D g(3, 3, 0.3, 0.3);
    CovarianceOperator cov(CovarianceSpec{0.8, 1.1}, g);
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(g.size());
    std::mt19937_64 a(99), b(99);
    Eigen::MatrixXd s1 = cov.sample(a, 5, zero);
    Eigen::MatrixXd s2 = cov.sample(b, 5, zero);
    CHECK((s1 - s2).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("zero variance collapses samples to the mean") {
    Grid2D g(3, 2, 0.5, 0.5);
    CovarianceOperator cov(CovarianceSpec{0.0, 1.1}, g);
    std::mt19937_64 rng(3);
    Eigen::VectorXd mean = Eigen::VectorXd::LinSpaced(g.size(), 0.0, 1.0);
    Eigen::MatrixXd s = cov.sample(rng, 3, mean);
    for (int c = 0; c < 3; ++c) CHECK((s.col(c) - mean).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("embedding diagnostics report the minimal size") {
    Grid2D g(5, 3, 0.2, 0.2);
    CovarianceOperator cov(CovarianceSpec{0.8, 1.1}, g);
    const EmbeddingInfo& e = cov.embedding();
    if (!e.doubled) {
        CHECK(e.mx == 2 * 5);
        CHECK(e.my == 2 * 3);
    }
    CHECK(e.max_surrogate > 0.0);
}

TEST_CASE("pseudo-inverse inverts on the numerical range") {
    Grid2D g(4, 3, 0.3, 0.3);
    CovarianceOperator cov(CovarianceSpec{0.8, 1.1}, g);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd v(g.size());
    for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    // C C^+ C v = C v holds for any spectrum
    Eigen::VectorXd cv = cov.apply(v);
    Eigen::VectorXd back = cov.apply(cov.apply_pinv(cv));
    CHECK((back - cv).lpNorm<Eigen::Infinity>() < 1e-8 * cv.lpNorm<Eigen::Infinity>());
}

TEST_CASE("grid validation rejects empty or degenerate shapes") {
    CHECK_THROWS_AS(Grid2D(0, 2, 0.1, 0.1), EmptyGrid);
    CHECK_THROWS_AS(Grid2D(2, 2, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(Grid2D(2, 2, -0.3, 0.1), ConfigError);
}
