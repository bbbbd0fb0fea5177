#include "wrml/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wrml/errors.hpp"

namespace wrml {
namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

double get_num(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number())
        throw ConfigError(std::string(key) + " must be a number");
    return obj[key].get<double>();
}

int get_int(const json& obj, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer())
        throw ConfigError(std::string(key) + " must be an integer");
    return obj[key].get<int>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean())
        throw ConfigError(std::string(key) + " must be a boolean");
    return obj[key].get<bool>();
}

std::vector<double> default_sweep_exponents() {
    std::vector<double> e;
    for (int i = 0; i <= 10; ++i) e.push_back(0.1 * i);
    return e;
}

} // namespace

std::vector<double> ObservationConfig::times() const {
    if (noise_std <= 0.0) throw ConfigError("observations.noise_std must be positive");
    if (start <= 0.0 || interval <= 0.0 || end < start)
        throw ConfigError("observation schedule must satisfy 0 < start <= end, interval > 0");
    std::vector<double> t;
    int n = static_cast<int>(std::floor((end - start) / interval + 0.5)) + 1;
    for (int k = 0; k < n; ++k) t.push_back(start + interval * k);
    return t;
}

std::vector<double> ObservationConfig::times_with_forecast() const {
    std::vector<double> t = times();
    if (forecast_time <= t.back())
        throw ConfigError("observations.forecast_time must exceed the last observation time");
    t.push_back(forecast_time);
    return t;
}

Grid2D ExperimentConfig::grid() const {
    if (grid_nodes < 2) throw ConfigError("grid.nodes must be at least 2");
    if (domain_length <= 0.0) throw ConfigError("grid.length must be positive");
    double h = domain_length / (grid_nodes - 1);
    return Grid2D(grid_nodes, grid_nodes, h, h);
}

WellSet ExperimentConfig::wells(const Grid2D& g) const {
    if (total_injection_rate <= 0.0)
        throw ConfigError("flow.total_injection_rate must be positive");
    return standard_well_layout(g, total_injection_rate);
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.sweep_exponents = default_sweep_exponents();
    return cfg;
}

namespace {

json to_json(const ExperimentConfig& c) {
    json j;
    j["grid"] = {{"nodes", c.grid_nodes}, {"length", c.domain_length}};
    j["kernel"] = {{"sigma", c.kernel.sigma}, {"rho", c.kernel.rho}};
    j["transform"] = to_string(c.transform);
    j["flow"] = {{"porosity", c.flow.porosity},
                 {"mu_w", c.flow.mu_w},
                 {"mu_o", c.flow.mu_o},
                 {"dt", c.flow.dt},
                 {"cfl_safety", c.flow.cfl_safety},
                 {"max_substeps", c.flow.max_substeps},
                 {"total_injection_rate", c.total_injection_rate}};
    j["observations"] = {{"noise_std", c.observations.noise_std},
                         {"start", c.observations.start},
                         {"interval", c.observations.interval},
                         {"end", c.observations.end},
                         {"forecast_time", c.observations.forecast_time}};
    j["ensemble"] = {{"size", c.ensemble_size}, {"threads", c.threads}};
    j["lm"] = {{"gamma", c.lm.gamma},
               {"lambda0", c.lm.lambda0},
               {"max_iterations", c.lm.max_iterations},
               {"rel_tol", c.lm.rel_tol},
               {"tol_streak", c.lm.tol_streak},
               {"max_rejections", c.lm.max_rejections}};
    json methods = json::array();
    for (Method m : c.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    json nm = {{"sigma_o", c.noise_model.sigma_o},
               {"sigma_pr", c.noise_model.sigma_pr},
               {"nu", c.noise_model.nu},
               {"tune", c.noise_model.tune},
               {"tune_draws", c.noise_model.tune_draws}};
    if (c.noise_model.omega_pr_auto)
        nm["omega_pr"] = "auto";
    else
        nm["omega_pr"] = c.noise_model.omega_pr;
    j["noise_model"] = nm;
    j["sweep"] = {{"exponents", c.sweep_exponents}};
    j["landscape"] = {{"enabled", c.landscape.enabled},
                      {"resolution", c.landscape.resolution},
                      {"margin", c.landscape.margin}};
    j["seed"] = c.seed;
    return j;
}

ExperimentConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    require_keys(j, "config", {"grid", "kernel", "transform", "flow", "observations",
                               "ensemble", "lm", "methods", "noise_model", "sweep",
                               "landscape", "seed"});
    ExperimentConfig c = default_experiment_config();

    if (j.contains("grid")) {
        const json& g = j["grid"];
        require_keys(g, "grid", {"nodes", "length"});
        c.grid_nodes = get_int(g, "nodes", c.grid_nodes);
        c.domain_length = get_num(g, "length", c.domain_length);
    }
    if (j.contains("kernel")) {
        const json& k = j["kernel"];
        require_keys(k, "kernel", {"sigma", "rho"});
        c.kernel.sigma = get_num(k, "sigma", c.kernel.sigma);
        c.kernel.rho = get_num(k, "rho", c.kernel.rho);
        if (c.kernel.sigma < 0.0 || c.kernel.rho <= 0.0)
            throw ConfigError("kernel requires sigma >= 0 and rho > 0");
    }
    if (j.contains("transform")) {
        if (!j["transform"].is_string()) throw ConfigError("transform must be a string");
        c.transform = transform_from_string(j["transform"].get<std::string>());
    }
    if (j.contains("flow")) {
        const json& f = j["flow"];
        require_keys(f, "flow", {"porosity", "mu_w", "mu_o", "dt", "cfl_safety",
                                 "max_substeps", "total_injection_rate"});
        c.flow.porosity = get_num(f, "porosity", c.flow.porosity);
        c.flow.mu_w = get_num(f, "mu_w", c.flow.mu_w);
        c.flow.mu_o = get_num(f, "mu_o", c.flow.mu_o);
        c.flow.dt = get_num(f, "dt", c.flow.dt);
        c.flow.cfl_safety = get_num(f, "cfl_safety", c.flow.cfl_safety);
        c.flow.max_substeps = get_int(f, "max_substeps", c.flow.max_substeps);
        c.total_injection_rate = get_num(f, "total_injection_rate", c.total_injection_rate);
        if (c.flow.porosity <= 0.0 || c.flow.mu_w <= 0.0 || c.flow.mu_o <= 0.0 ||
            c.flow.dt <= 0.0 || c.flow.cfl_safety <= 0.0 || c.flow.cfl_safety > 1.0)
            throw ConfigError("flow parameters out of range");
    }
    if (j.contains("observations")) {
        const json& o = j["observations"];
        require_keys(o, "observations",
                     {"noise_std", "start", "interval", "end", "forecast_time"});
        c.observations.noise_std = get_num(o, "noise_std", c.observations.noise_std);
        c.observations.start = get_num(o, "start", c.observations.start);
        c.observations.interval = get_num(o, "interval", c.observations.interval);
        c.observations.end = get_num(o, "end", c.observations.end);
        c.observations.forecast_time = get_num(o, "forecast_time", c.observations.forecast_time);
    }
    if (j.contains("ensemble")) {
        const json& e = j["ensemble"];
        require_keys(e, "ensemble", {"size", "threads"});
        c.ensemble_size = get_int(e, "size", c.ensemble_size);
        c.threads = get_int(e, "threads", c.threads);
        if (c.ensemble_size < 2) throw ConfigError("ensemble.size must be at least 2");
    }
    if (j.contains("lm")) {
        const json& l = j["lm"];
        require_keys(l, "lm", {"gamma", "lambda0", "max_iterations", "rel_tol",
                               "tol_streak", "max_rejections"});
        c.lm.gamma = get_num(l, "gamma", c.lm.gamma);
        c.lm.lambda0 = get_num(l, "lambda0", c.lm.lambda0);
        c.lm.max_iterations = get_int(l, "max_iterations", c.lm.max_iterations);
        c.lm.rel_tol = get_num(l, "rel_tol", c.lm.rel_tol);
        c.lm.tol_streak = get_int(l, "tol_streak", c.lm.tol_streak);
        c.lm.max_rejections = get_int(l, "max_rejections", c.lm.max_rejections);
        if (c.lm.gamma <= 1.0) throw ConfigError("lm.gamma must exceed 1");
        if (c.lm.max_iterations < 1) throw ConfigError("lm.max_iterations must be positive");
    }
    if (j.contains("methods")) {
        if (!j["methods"].is_array() || j["methods"].empty())
            throw ConfigError("methods must be a non-empty array");
        c.methods.clear();
        for (const auto& m : j["methods"]) {
            if (!m.is_string()) throw ConfigError("methods entries must be strings");
            c.methods.push_back(method_from_string(m.get<std::string>()));
        }
    }
    if (j.contains("noise_model")) {
        const json& n = j["noise_model"];
        require_keys(n, "noise_model",
                     {"sigma_o", "sigma_pr", "nu", "omega_pr", "tune", "tune_draws"});
        c.noise_model.sigma_o = get_num(n, "sigma_o", c.noise_model.sigma_o);
        c.noise_model.sigma_pr = get_num(n, "sigma_pr", c.noise_model.sigma_pr);
        c.noise_model.nu = get_num(n, "nu", c.noise_model.nu);
        c.noise_model.tune = get_bool(n, "tune", c.noise_model.tune);
        c.noise_model.tune_draws = get_int(n, "tune_draws", c.noise_model.tune_draws);
        if (n.contains("omega_pr")) {
            if (n["omega_pr"].is_string()) {
                if (n["omega_pr"].get<std::string>() != "auto")
                    throw ConfigError("noise_model.omega_pr must be a number or \"auto\"");
                c.noise_model.omega_pr_auto = true;
            } else if (n["omega_pr"].is_number()) {
                c.noise_model.omega_pr_auto = false;
                c.noise_model.omega_pr = n["omega_pr"].get<double>();
            } else {
                throw ConfigError("noise_model.omega_pr must be a number or \"auto\"");
            }
        }
        if (c.noise_model.sigma_o < 0.0 || c.noise_model.sigma_pr <= 0.0 ||
            c.noise_model.nu < 1.0)
            throw ConfigError("noise_model requires sigma_o >= 0, sigma_pr > 0, nu >= 1");
    }
    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        require_keys(s, "sweep", {"exponents"});
        if (s.contains("exponents")) {
            if (!s["exponents"].is_array())
                throw ConfigError("sweep.exponents must be an array");
            c.sweep_exponents.clear();
            for (const auto& e : s["exponents"]) {
                if (!e.is_number()) throw ConfigError("sweep.exponents entries must be numbers");
                double v = e.get<double>();
                if (v < 0.0 || v > 1.0)
                    throw ConfigError("sweep.exponents entries must lie in [0, 1]");
                c.sweep_exponents.push_back(v);
            }
            if (c.sweep_exponents.empty())
                throw ConfigError("sweep.exponents must be non-empty");
        }
    }
    if (j.contains("landscape")) {
        const json& l = j["landscape"];
        require_keys(l, "landscape", {"enabled", "resolution", "margin"});
        c.landscape.enabled = get_bool(l, "enabled", c.landscape.enabled);
        c.landscape.resolution = get_int(l, "resolution", c.landscape.resolution);
        c.landscape.margin = get_num(l, "margin", c.landscape.margin);
        if (c.landscape.resolution < 2)
            throw ConfigError("landscape.resolution must be at least 2");
        if (c.landscape.margin < 0.0)
            throw ConfigError("landscape.margin must be non-negative");
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            throw ConfigError("seed must be a non-negative integer");
        auto s = j["seed"].get<long long>();
        if (s < 0) throw ConfigError("seed must be a non-negative integer");
        c.seed = static_cast<std::uint64_t>(s);
    }

    c.grid();
    c.observations.times_with_forecast();
    return c;
}

} // namespace

std::string ExperimentConfig::canonical_json() const {
    return to_json(*this).dump(2);
}

std::uint64_t ExperimentConfig::config_hash() const {
    std::string s = canonical_json();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse failure in " + path + ": " + e.what());
    }
    return from_json(j);
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << cfg.canonical_json() << "\n";
}

std::uint64_t seed_for(std::uint64_t master, const std::string& stream) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : stream) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::uint64_t z = master ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace wrml
