#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wrml/config.hpp"
#include "wrml/errors.hpp"
#include "wrml/experiment.hpp"

using namespace wrml;

namespace {

std::string temp_file(const char* name, const std::string& content) {
    std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

} // namespace

TEST_CASE("default configuration is valid and hashes stably") {
    ExperimentConfig cfg = default_experiment_config();
    Grid2D g = cfg.grid();
    CHECK(g.nx_plus1 == 41);
    CHECK(g.hx == doctest::Approx(0.05));
    CHECK(cfg.observations.times().size() == 60);
    CHECK(cfg.observations.times_with_forecast().back() == 70.0);
    CHECK(cfg.sweep_exponents.size() == 11);
    CHECK(cfg.canonical_json() == cfg.canonical_json());
    std::uint64_t h = cfg.config_hash();
    ExperimentConfig other = cfg;
    other.seed = cfg.seed + 1;
    CHECK(other.config_hash() != h);
}

TEST_CASE("configs load from json with strict keys") {
    std::string good = temp_file("wrml_cfg_good.json", R"({
        "grid": {"nodes": 21, "length": 2.0},
        "transform": "monotonic",
        "flow": {"total_injection_rate": 0.05},
        "observations": {"end": 20.0, "forecast_time": 25.0},
        "ensemble": {"size": 50},
        "methods": ["hybrid"],
        "noise_model": {"sigma_o": 4.0, "omega_pr": -12.5},
        "sweep": {"exponents": [0.0, 1.0]},
        "seed": 99
    })");
    ExperimentConfig cfg = load_experiment_config(good);
    CHECK(cfg.grid_nodes == 21);
    CHECK(cfg.transform == TransformKind::Monotonic);
    CHECK(cfg.total_injection_rate == 0.05);
    CHECK(cfg.observations.end == 20.0);
    CHECK(cfg.ensemble_size == 50);
    REQUIRE(cfg.methods.size() == 1);
    CHECK(cfg.methods[0] == Method::Hybrid);
    CHECK_FALSE(cfg.noise_model.omega_pr_auto);
    CHECK(cfg.noise_model.omega_pr == -12.5);
    CHECK(cfg.seed == 99);
    // untouched fields keep their defaults
    CHECK(cfg.kernel.sigma == 0.8);
    CHECK(cfg.lm.gamma == 5.0);
    std::remove(good.c_str());

    std::string bad = temp_file("wrml_cfg_bad.json", R"({"grids": {}})");
    CHECK_THROWS_AS(load_experiment_config(bad), ConfigError);
    std::remove(bad.c_str());

    std::string bad2 = temp_file("wrml_cfg_bad2.json",
                                 R"({"observations": {"end": 5.0, "forecast_time": 3.0}})");
    CHECK_THROWS_AS(load_experiment_config(bad2), ConfigError);
    std::remove(bad2.c_str());

    CHECK_THROWS_AS(load_experiment_config("/no/such/file.json"), ConfigError);
}

TEST_CASE("seed streams are deterministic and distinct") {
    CHECK(seed_for(1, "truth-field") == seed_for(1, "truth-field"));
    CHECK(seed_for(1, "truth-field") != seed_for(2, "truth-field"));
    CHECK(seed_for(1, "truth-field") != seed_for(1, "obs-noise"));
    CHECK(seed_for(1, "ensemble") != seed_for(1, "tune-prior"));
}

TEST_CASE("log score matches the weighted gaussian formula") {
    Eigen::VectorXd s(4), w(4);
    s << 0.0, 1.0, 2.0, 3.0;
    w.setConstant(0.25);
    double mu = 1.5;
    double var = (2.25 + 0.25 + 0.25 + 2.25) * 0.25 / (1.0 - 0.25);
    double want = 0.5 * std::log(2.0 * M_PI * var) + 0.5 * (1.0 - mu) * (1.0 - mu) / var;
    CHECK(log_score(s, w, 1.0) == doctest::Approx(want).epsilon(1e-14));

    Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 2.0);
    CHECK_THROWS_AS(log_score(flat, w, 2.0), DegenerateEnsemble);
    Eigen::VectorXd wbad(4);
    wbad << 0.5, 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(log_score(s, wbad, 1.0), UnnormalizedWeights);
    Eigen::VectorXd spike(4);
    spike << 1.0, 0.0, 0.0, 0.0;
    CHECK_THROWS_AS(log_score(s, spike, 1.0), DegenerateEnsemble);
}

TEST_CASE("correlation is exact on linear relations") {
    Eigen::VectorXd a(5);
    a << 1, 2, 3, 4, 5;
    CHECK(pearson_correlation(a, 2.0 * a) == doctest::Approx(1.0));
    CHECK(pearson_correlation(a, -0.5 * a) == doctest::Approx(-1.0));
    Eigen::VectorXd flat = Eigen::VectorXd::Ones(5);
    CHECK_THROWS_AS(pearson_correlation(a, flat), ZeroVariance);
    Eigen::VectorXd two(2);
    two << 1, 2;
    CHECK_THROWS_AS(pearson_correlation(two, two), InsufficientReplicates);
}

TEST_CASE("landscape slice spans the anchors and maps a quadratic exactly") {
    Eigen::VectorXd x1(3), x2(3), x3(3);
    x1 << 1.0, 0.0, 0.0;
    x2 << -1.0, 0.0, 0.0;
    x3 << 0.0, 2.0, 0.0;
    auto objective = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    LandscapeSlice s = landscape_slice(x1, x2, x3, objective, 21, 0.0, 1);

    CHECK(s.anchor_coords(0, 0) == doctest::Approx(0.0));
    CHECK(s.anchor_coords(0, 1) == doctest::Approx(0.0));
    CHECK(s.anchor_coords(1, 0) == doctest::Approx(2.0));
    CHECK(s.anchor_coords(1, 1) == doctest::Approx(0.0));
    CHECK(s.anchor_coords(2, 0) == doctest::Approx(1.0));
    CHECK(s.anchor_coords(2, 1) == doctest::Approx(2.0));

    // values reproduce |x1 + a e1 + b e2|^2 = (1-a)^2 + b^2
    for (int i = 0; i < 21; ++i)
        for (int j = 0; j < 21; ++j) {
            double a = s.alphas[i], b = s.betas[j];
            CHECK(s.values(i, j) ==
                  doctest::Approx((1.0 - a) * (1.0 - a) + b * b).epsilon(1e-12));
        }

    Eigen::Matrix2d h = fit_quadratic_hessian(s);
    CHECK(h(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(h(1, 1) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(h(0, 1) == doctest::Approx(0.0).epsilon(1e-8));

    auto minima = find_local_minima(s.values);
    REQUIRE(minima.size() == 1);
    CHECK(s.alphas[minima[0].first] == doctest::Approx(1.0).epsilon(0.1));
    CHECK(s.betas[minima[0].second] == doctest::Approx(0.0).epsilon(0.1));

    // threading does not change values
    LandscapeSlice s4 = landscape_slice(x1, x2, x3, objective, 21, 0.0, 4);
    CHECK((s.values - s4.values).lpNorm<Eigen::Infinity>() == 0.0);

    CHECK_THROWS_AS(landscape_slice(x1, x1, x3, objective, 5, 0.1, 1), DegenerateBasis);
    Eigen::VectorXd mid = 0.5 * (x1 + x2);
    CHECK_THROWS_AS(landscape_slice(x1, x2, mid, objective, 5, 0.1, 1), DegenerateBasis);
}

TEST_CASE("plateaus have no strict local minima") {
    Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(4, 4);
    CHECK(find_local_minima(flat).empty());
    flat(2, 2) = 0.5;
    auto m = find_local_minima(flat);
    REQUIRE(m.size() == 1);
    CHECK(m[0] == std::pair<int, int>{2, 2});
}

TEST_CASE("csv files round-trip doubles exactly") {
    std::string path =
        (std::filesystem::temp_directory_path() / "wrml_roundtrip.csv").string();
    Eigen::MatrixXd rows(3, 3);
    rows << 1.0 / 3.0, -2.5e-17, 41.0,
            0.1, 1e300, -0.0,
            3.141592653589793, -1.0 / 7.0, 6.02e23;
    write_csv(path, {"a", "b", "c"}, rows);
    CsvTable t = read_csv(path);
    REQUIRE(t.header.size() == 3);
    CHECK(t.header[1] == "b");
    REQUIRE(t.rows.rows() == 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(t.rows(i, j) == rows(i, j));
    std::remove(path.c_str());

    CHECK_THROWS(read_csv("/no/such/file.csv"));
}

TEST_CASE("number formatting is shortest-exact") {
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(5.0) == "5");
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::strtod(format_double(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
}
