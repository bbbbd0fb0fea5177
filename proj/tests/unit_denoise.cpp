#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "wrml/denoise.hpp"
#include "wrml/errors.hpp"

using namespace wrml;

namespace {

// Two-stage grid search oracle for the posterior peak, resolution ~1e-6.
double grid_search_map(const NoiseModel& m, double omega_obs) {
    double lo = m.omega_pr + 1e-9;
    double hi = std::max(omega_obs, m.omega_pr) + 4.0 * m.sigma_o +
                2.0 * m.sigma_pr * std::max(m.nu, 2.0);
    double best = lo;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 4; ++pass) {
        const int n = 2000;
        for (int k = 0; k <= n; ++k) {
            double w = lo + (hi - lo) * static_cast<double>(k) / n;
            double v = denoise_log_posterior(m, w, omega_obs);
            if (v > best_val) {
                best_val = v;
                best = w;
            }
        }
        double span = (hi - lo) / n;
        lo = std::max(m.omega_pr + 1e-12, best - 2.0 * span);
        hi = best + 2.0 * span;
    }
    return best;
}

} // namespace

TEST_CASE("posterior map matches a fine grid search") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<NoiseModel> models = {
        {16.9, 6.0, 4.0, 0.0},   // history-matching defaults, increasing map
        {95.3, 13.0, 3.0, 0.0},  // wide-noise defaults
        {2.0, 1.0, 2.0, 0.0},
        {0.5, 8.0, 6.0, -40.0},
    };
    for (const NoiseModel& base : models) {
        for (int rep = 0; rep < 25; ++rep) {
            NoiseModel m = base;
            double omega_obs =
                m.omega_pr + (u(rng) - 0.2) * 4.0 * (m.sigma_o + m.sigma_pr * m.nu);
            double got = denoise_map(m, omega_obs);
            double want = grid_search_map(m, omega_obs);
            CHECK(std::abs(got - want) <=
                  1e-5 * std::max(1.0, std::abs(want)) + 2e-5 * m.sigma_o);
        }
    }
}

TEST_CASE("map is shift equivariant") {
    NoiseModel m{10.0, 5.0, 4.0, 2.0};
    double base = denoise_map(m, 30.0);
    NoiseModel shifted = m;
    shifted.omega_pr += 100.0;
    CHECK(denoise_map(shifted, 130.0) == doctest::Approx(base + 100.0).epsilon(1e-10));
}

TEST_CASE("huge observation noise collapses to the prior mode") {
    NoiseModel m{1e8, 6.0, 4.0, -3.0};
    // chi-square mode: omega_pr + (nu - 2) sigma_pr = -3 + 12
    CHECK(denoise_map(m, 500.0) == doctest::Approx(9.0).epsilon(1e-4));
}

TEST_CASE("zero observation noise keeps the observation inside the support") {
    NoiseModel m{0.0, 6.0, 4.0, 0.0};
    CHECK(denoise_map(m, 3.5) == 3.5);
    CHECK(denoise_map(m, -7.0) > 0.0);
    CHECK(denoise_map(m, -7.0) < 1e-6);
}

TEST_CASE("shape below two returns the interior stationary point when it exists") {
    NoiseModel m{3.0, 5.0, 1.5, 0.0};
    double omega_obs = 20.0;
    double w = denoise_map(m, omega_obs);
    CHECK(w > m.omega_pr);
    // stationary point of the log posterior: the numerical derivative vanishes
    double h = 1e-6;
    double d = (denoise_log_posterior(m, w + h, omega_obs) -
                denoise_log_posterior(m, w - h, omega_obs)) /
               (2.0 * h);
    CHECK(std::abs(d) < 1e-4);
}

TEST_CASE("log posterior is minus infinity outside the support") {
    NoiseModel m{2.0, 3.0, 4.0, 1.0};
    CHECK(std::isinf(denoise_log_posterior(m, 1.0, 5.0)));
    CHECK(std::isinf(denoise_log_posterior(m, 0.5, 5.0)));
    CHECK(std::isfinite(denoise_log_posterior(m, 1.5, 5.0)));
    CHECK_THROWS_AS(denoise_map(NoiseModel{1.0, -2.0, 3.0, 0.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(denoise_map(NoiseModel{1.0, 2.0, 0.5, 0.0}, 1.0), ConfigError);
}

TEST_CASE("denoising shrinks the spread of noisy log-weights") {
    std::mt19937_64 rng(77);
    NoiseModel m{10.0, 6.0, 4.0, 0.0};
    std::gamma_distribution<double> chi2(m.nu / 2.0, 2.0);
    std::normal_distribution<double> gauss(0.0, m.sigma_o);
    Eigen::VectorXd lw(400);
    for (int i = 0; i < lw.size(); ++i)
        lw[i] = m.omega_pr + m.sigma_pr * chi2(rng) + gauss(rng);
    Eigen::VectorXd den = denoise_log_weights(m, lw);
    REQUIRE(den.size() == lw.size());
    auto sd = [](const Eigen::VectorXd& v) {
        return std::sqrt((v.array() - v.mean()).square().sum() / (v.size() - 1));
    };
    CHECK(sd(den) < sd(lw));
    for (int i = 0; i < den.size(); ++i) CHECK(den[i] > m.omega_pr);
}

TEST_CASE("default support bound sits below every observation") {
    Eigen::VectorXd lw(5);
    lw << -10.0, -4.0, 0.0, 3.0, 8.0;
    double b1 = default_omega_pr(lw, 2.0, 3.0, 1.0);
    CHECK(b1 == doctest::Approx(std::min(8.0 - 36.0, -10.0 - 1.0)));
    // a tight prior is clipped by the min rule instead
    double b2 = default_omega_pr(lw, 0.1, 1.0, 5.0);
    CHECK(b2 == doctest::Approx(-15.0));
    CHECK(b2 < lw.minCoeff());
}

TEST_CASE("replicate spread estimate is the sample standard deviation") {
    Eigen::VectorXd r(3);
    r << -10.0, 0.0, 10.0;
    CHECK(fit_noise_sigma(r) == doctest::Approx(10.0));
    Eigen::VectorXd r2(2);
    r2 << 1.0, 2.0;
    CHECK_THROWS_AS(fit_noise_sigma(r2), InsufficientReplicates);
}

TEST_CASE("ks statistic on simple samples") {
    CHECK(ks_statistic({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
    CHECK(ks_statistic({0.0, 1.0}, {5.0, 6.0}) == doctest::Approx(1.0));
    CHECK(ks_statistic({1.0, 2.0}, {1.5}) == doctest::Approx(0.5));
}

TEST_CASE("prior tuning picks the generating parameters from distractors") {
    std::mt19937_64 gen(123);
    NoiseModel truth{3.0, 6.0, 4.0, 0.0};
    std::gamma_distribution<double> chi2(truth.nu / 2.0, 2.0);
    std::normal_distribution<double> gauss(0.0, truth.sigma_o);
    Eigen::VectorXd lw(1500);
    for (int i = 0; i < lw.size(); ++i)
        lw[i] = truth.omega_pr + truth.sigma_pr * chi2(gen) + gauss(gen);

    PriorCandidates cand;
    cand.sigma_pr = {1.0, 6.0, 20.0};
    cand.nu = {2.0, 4.0, 8.0};
    cand.omega_pr = {-30.0, 0.0, 30.0};
    std::mt19937_64 rng(321);
    NoiseModel picked = tune_prior(lw, truth.sigma_o, cand, 20000, rng);
    CHECK(picked.sigma_pr == truth.sigma_pr);
    CHECK(picked.nu == truth.nu);
    CHECK(picked.omega_pr == truth.omega_pr);
    CHECK(picked.sigma_o == truth.sigma_o);
}

TEST_CASE("power transform interpolates between uniform and raw weights") {
    Eigen::VectorXd lw(5);
    lw << 0.0, -2.0, -4.0, -9.0, -1.0;
    WeightSet flat = power_regularize(lw, 0.0);
    CHECK((flat.weights.array() - 0.2).abs().maxCoeff() < 1e-14);
    WeightSet raw = power_regularize(lw, 1.0);
    WeightSet direct = finalize_weights(lw);
    CHECK((raw.weights - direct.weights).lpNorm<Eigen::Infinity>() < 1e-14);
    double prev = std::numeric_limits<double>::infinity();
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        double ess = power_regularize(lw, a).ess;
        CHECK(ess <= prev + 1e-12);
        prev = ess;
    }
    CHECK_THROWS_AS(power_regularize(lw, 1.5), ConfigError);
    CHECK_THROWS_AS(power_regularize(lw, -0.1), ConfigError);
}
