#include "wrml/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wrml/errors.hpp"
#include "wrml/field_io.hpp"
#include "wrml/linalg.hpp"
#include "wrml/transforms.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wrml {

// ---------------------------------------------------------------------------
// CSV plumbing

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows) {
    if (header.size() != static_cast<std::size_t>(rows.cols()) && rows.size() > 0)
        throw DimensionMismatch("csv header width does not match row width");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t k = 0; k < header.size(); ++k)
        out << (k ? "," : "") << header[k];
    out << "\n";
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j)
            out << (j ? "," : "") << format_double(rows(i, j));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing file " + path +
                                      "; run the producing stage first");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) t.header.push_back(tok);

    std::vector<double> data;
    Eigen::Index nrows = 0;
    const Eigen::Index ncols = static_cast<Eigen::Index>(t.header.size());
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Eigen::Index got = 0;
        const char* p = line.c_str();
        while (*p) {
            char* end = nullptr;
            double v = std::strtod(p, &end);
            if (end == p) throw std::runtime_error("bad number in " + path);
            data.push_back(v);
            ++got;
            p = end;
            if (*p == ',') ++p;
            else if (*p) throw std::runtime_error("bad separator in " + path);
        }
        if (got != ncols) throw std::runtime_error("ragged row in " + path);
        ++nrows;
    }
    t.rows.resize(nrows, ncols);
    for (Eigen::Index i = 0; i < nrows; ++i)
        for (Eigen::Index j = 0; j < ncols; ++j) t.rows(i, j) = data[i * ncols + j];
    return t;
}

// ---------------------------------------------------------------------------
// Forward model

Eigen::VectorXd ForwardModel::predict_from_m(const Eigen::VectorXd& m) const {
    Eigen::VectorXd k = to_permeability(m);
    WaterCutTable table = simulate(grid, k, wells, flow, times);
    return table.flat();
}

Eigen::VectorXd ForwardModel::predict_from_x(const Eigen::VectorXd& x) const {
    return predict_from_m(transform_forward(transform, x));
}

ForwardModel make_forward_model(const ExperimentConfig& cfg, bool with_forecast) {
    ForwardModel fm;
    fm.grid = cfg.grid();
    fm.wells = cfg.wells(fm.grid);
    fm.flow = cfg.flow;
    fm.transform = cfg.transform;
    fm.times = with_forecast ? cfg.observations.times_with_forecast()
                             : cfg.observations.times();
    return fm;
}

// ---------------------------------------------------------------------------
// Scores and correlations

double log_score(const Eigen::VectorXd& samples, const Eigen::VectorXd& weights,
                 double outcome) {
    if (samples.size() != weights.size())
        throw DimensionMismatch("log_score: samples and weights differ in length");
    if (samples.size() < 2) throw DegenerateEnsemble("log_score needs at least 2 samples");
    if (std::abs(weights.sum() - 1.0) > 1e-9)
        throw UnnormalizedWeights("log_score expects normalized weights");
    const double mu = weights.dot(samples);
    const double sw2 = weights.squaredNorm();
    const double denom = 1.0 - sw2;
    if (denom <= 1e-12)
        throw DegenerateEnsemble("weighted sample size too small for a variance estimate");
    double var = 0.0;
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        double r = samples[i] - mu;
        var += weights[i] * r * r;
    }
    var /= denom;
    if (var <= 1e-12) throw DegenerateEnsemble("forecast spread vanished");
    const double two_pi = 6.283185307179586476925286766559;
    double r = outcome - mu;
    return 0.5 * std::log(two_pi * var) + 0.5 * r * r / var;
}

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw DimensionMismatch("correlation inputs differ in length");
    if (a.size() < 3) throw InsufficientReplicates("correlation needs at least 3 points");
    Eigen::VectorXd ca = a.array() - a.mean();
    Eigen::VectorXd cb = b.array() - b.mean();
    double na = ca.squaredNorm(), nb = cb.squaredNorm();
    if (na <= 0.0 || nb <= 0.0)
        throw ZeroVariance("correlation undefined for a constant input");
    return ca.dot(cb) / std::sqrt(na * nb);
}

// ---------------------------------------------------------------------------
// Landscape

LandscapeSlice landscape_slice(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                               const Eigen::VectorXd& x3,
                               const std::function<double(const Eigen::VectorXd&)>& objective,
                               int resolution, double margin, int threads) {
    if (x1.size() != x2.size() || x1.size() != x3.size())
        throw DimensionMismatch("slice anchors differ in length");
    if (resolution < 2) throw ConfigError("slice resolution must be at least 2");
    if (margin < 0.0) throw ConfigError("slice margin must be non-negative");

    Eigen::VectorXd d12 = x2 - x1;
    double n12 = d12.norm();
    if (n12 < 1e-10) throw DegenerateBasis("first two anchors coincide");
    LandscapeSlice s;
    s.origin = x1;
    s.e1 = d12 / n12;
    Eigen::VectorXd d13 = x3 - x1;
    Eigen::VectorXd r = d13 - s.e1.dot(d13) * s.e1;
    if (r.norm() <= 1e-10 * std::max(1.0, d13.norm()))
        throw DegenerateBasis("third anchor lies on the line of the first two");
    s.e2 = r / r.norm();

    for (int k = 0; k < 3; ++k) {
        const Eigen::VectorXd& xk = (k == 0) ? x1 : (k == 1) ? x2 : x3;
        s.anchor_coords(k, 0) = s.e1.dot(xk - x1);
        s.anchor_coords(k, 1) = s.e2.dot(xk - x1);
    }
    double amin = s.anchor_coords.col(0).minCoeff(), amax = s.anchor_coords.col(0).maxCoeff();
    double bmin = s.anchor_coords.col(1).minCoeff(), bmax = s.anchor_coords.col(1).maxCoeff();
    double pa = margin * (amax - amin), pb = margin * (bmax - bmin);
    amin -= pa; amax += pa;
    bmin -= pb; bmax += pb;

    s.alphas.resize(resolution);
    s.betas.resize(resolution);
    for (int i = 0; i < resolution; ++i) {
        double f = static_cast<double>(i) / (resolution - 1);
        s.alphas[i] = amin + f * (amax - amin);
        s.betas[i] = bmin + f * (bmax - bmin);
    }
    s.values.resize(resolution, resolution);
    const int n = resolution * resolution;
    parallel_for(n, threads, [&](int t) {
        int ia = t / resolution, ib = t % resolution;
        Eigen::VectorXd x = s.origin + s.alphas[ia] * s.e1 + s.betas[ib] * s.e2;
        s.values(ia, ib) = objective(x);
    });
    return s;
}

std::vector<std::pair<int, int>> find_local_minima(const Eigen::MatrixXd& values) {
    std::vector<std::pair<int, int>> out;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            bool strict = true;
            for (int di = -1; di <= 1 && strict; ++di)
                for (int dj = -1; dj <= 1 && strict; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    Eigen::Index ni = i + di, nj = j + dj;
                    if (ni < 0 || nj < 0 || ni >= values.rows() || nj >= values.cols())
                        continue;
                    if (!(values(i, j) < values(ni, nj))) strict = false;
                }
            if (strict) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    return out;
}

Eigen::Matrix2d fit_quadratic_hessian(const LandscapeSlice& slice) {
    const int na = static_cast<int>(slice.alphas.size());
    const int nb = static_cast<int>(slice.betas.size());
    Eigen::MatrixXd design(na * nb, 6);
    Eigen::VectorXd rhs(na * nb);
    int r = 0;
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j, ++r) {
            double a = slice.alphas[i], b = slice.betas[j];
            design.row(r) << 1.0, a, b, a * a, a * b, b * b;
            rhs[r] = slice.values(i, j);
        }
    Eigen::VectorXd c = design.colPivHouseholderQr().solve(rhs);
    Eigen::Matrix2d h;
    h << 2.0 * c[3], c[4], c[4], 2.0 * c[5];
    return h;
}

// ---------------------------------------------------------------------------
// Stage plumbing

namespace {

struct Paths {
    fs::path root;
    explicit Paths(const std::string& out) : root(out) {}
    fs::path manifest() const { return root / "manifest.json"; }
    fs::path config() const { return root / "config.json"; }
    fs::path wells() const { return root / "wells.csv"; }
    fs::path truth_field() const { return root / "truth_x.fld"; }
    fs::path obs() const { return root / "obs.csv"; }
    fs::path obs_clean() const { return root / "obs_clean.csv"; }
    fs::path truth_forecast() const { return root / "truth_forecast.csv"; }
    fs::path anchors() const { return root / "prior" / "anchors.csv"; }
    fs::path perturbed() const { return root / "prior" / "perturbed_obs.csv"; }
    fs::path mdir(Method m) const { return root / to_string(m); }
    fs::path iterations(Method m) const { return mdir(m) / "iterations.csv"; }
    fs::path members(Method m) const { return mdir(m) / "members.csv"; }
    fs::path predictions(Method m) const { return mdir(m) / "predictions.csv"; }
    fs::path misfits(Method m) const { return mdir(m) / "misfits.csv"; }
    fs::path weights(Method m) const { return mdir(m) / "weights.csv"; }
    fs::path weights_denoised(Method m) const { return mdir(m) / "weights_denoised.csv"; }
    fs::path forecast_members(Method m) const { return mdir(m) / "forecast_members.csv"; }
    fs::path forecast_summary(Method m) const { return mdir(m) / "forecast_summary.csv"; }
    fs::path sweep(Method m) const { return mdir(m) / "sweep.csv"; }
    fs::path landscape_dir() const { return root / "landscape"; }
    fs::path landscape() const { return landscape_dir() / "landscape.csv"; }
    fs::path landscape_anchors() const { return landscape_dir() / "anchors.csv"; }
};

json load_manifest(const Paths& p) {
    std::ifstream in(p.manifest());
    if (!in) return json::object();
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("corrupt manifest: ") + e.what());
    }
    return j;
}

void store_manifest(const Paths& p, const json& j) {
    std::ofstream out(p.manifest(), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest");
    out << j.dump(2) << "\n";
}

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

std::vector<std::string> member_header(const char* prefix, Eigen::Index n) {
    std::vector<std::string> h;
    h.push_back("member");
    for (Eigen::Index i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
    return h;
}

// (member, values...) table from a column-per-member matrix.
Eigen::MatrixXd with_member_column(const Eigen::MatrixXd& columns) {
    Eigen::MatrixXd t(columns.cols(), columns.rows() + 1);
    for (Eigen::Index j = 0; j < columns.cols(); ++j) {
        t(j, 0) = static_cast<double>(j);
        t.row(j).tail(columns.rows()) = columns.col(j).transpose();
    }
    return t;
}

Eigen::MatrixXd strip_member_column(const CsvTable& t) {
    if (t.header.empty() || t.header[0] != "member")
        throw std::runtime_error("expected a member column");
    return t.rows.rightCols(t.rows.cols() - 1).transpose();
}

Eigen::VectorXd flat_observations(const CsvTable& obs) {
    // rows are times, first column is the time stamp
    Eigen::Index nt = obs.rows.rows(), np = obs.rows.cols() - 1;
    Eigen::VectorXd d(nt * np);
    for (Eigen::Index t = 0; t < nt; ++t)
        d.segment(t * np, np) = obs.rows.row(t).tail(np).transpose();
    return d;
}

struct Context {
    ExperimentConfig cfg;
    Grid2D grid;
    WellSet wells;
    std::unique_ptr<CovarianceOperator> cov;

    explicit Context(const ExperimentConfig& c)
        : cfg(c), grid(c.grid()), wells(c.wells(grid)),
          cov(std::make_unique<CovarianceOperator>(c.kernel, grid)) {}

    AssimilationProblem problem(const Eigen::VectorXd& d_obs,
                                std::shared_ptr<ForwardModel> fm) const {
        AssimilationProblem p;
        p.cov = cov.get();
        p.x_pr = Eigen::VectorXd::Zero(grid.size());
        p.d_obs = d_obs;
        p.cd_diag = Eigen::VectorXd::Constant(
            d_obs.size(), cfg.observations.noise_std * cfg.observations.noise_std);
        p.transform = cfg.transform;
        if (fm)
            p.predict_from_m = [fm](const Eigen::VectorXd& m) {
                return fm->predict_from_m(m);
            };
        p.threads = cfg.threads;
        return p;
    }
};

NoiseModel resolve_noise_model(const ExperimentConfig& cfg, const Eigen::VectorXd& lw) {
    const NoiseModelConfig& nc = cfg.noise_model;
    NoiseModel m;
    m.sigma_o = nc.sigma_o;
    m.sigma_pr = nc.sigma_pr;
    m.nu = nc.nu;
    if (nc.tune) {
        PriorCandidates cand;
        cand.sigma_pr = {2.0, 4.0, 6.0, 8.0, 10.0, 13.0, 16.0, 20.0};
        cand.nu = {2.0, 3.0, 4.0, 5.0, 6.0};
        for (double spr : cand.sigma_pr)
            for (double nu : cand.nu)
                cand.omega_pr.push_back(default_omega_pr(lw, spr, nu, nc.sigma_o));
        std::sort(cand.omega_pr.begin(), cand.omega_pr.end());
        cand.omega_pr.erase(std::unique(cand.omega_pr.begin(), cand.omega_pr.end()),
                            cand.omega_pr.end());
        std::mt19937_64 rng(seed_for(cfg.seed, "tune-prior"));
        return tune_prior(lw, nc.sigma_o, cand, nc.tune_draws, rng);
    }
    m.omega_pr = nc.omega_pr_auto
                     ? default_omega_pr(lw, m.sigma_pr, m.nu, m.sigma_o)
                     : nc.omega_pr;
    return m;
}

// normalized offtake-rate weights over producers, in well order (the column
// order of the forecast artifacts)
Eigen::VectorXd producer_rate_weights(const WellSet& ws) {
    std::vector<double> q;
    for (const Well& w : ws.wells)
        if (w.rate < 0.0) q.push_back(-w.rate);
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(q.data(),
                                                    static_cast<Eigen::Index>(q.size()));
    return v / v.sum();
}

} // namespace

// ---------------------------------------------------------------------------
// Stages

TruthArtifacts run_truth_stage(const ExperimentConfig& cfg, const std::string& out_dir) {
    Paths p(out_dir);
    fs::create_directories(p.root);
    Context ctx(cfg);
    ForwardModel fm = make_forward_model(cfg, true);
    const auto times = cfg.observations.times();
    const Eigen::Index nt = static_cast<Eigen::Index>(times.size());
    const Eigen::Index np = static_cast<Eigen::Index>(fm.wells.producer_cells().size());

    std::mt19937_64 rng_field(seed_for(cfg.seed, "truth-field"));
    TruthArtifacts a;
    a.x_true = ctx.cov->sample(rng_field, 1, Eigen::VectorXd::Zero(ctx.grid.size())).col(0);

    Eigen::VectorXd full = fm.predict_from_x(a.x_true);
    a.d_clean = full.head(nt * np);
    a.forecast = full.tail(np);

    std::mt19937_64 rng_noise(seed_for(cfg.seed, "obs-noise"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    a.d_obs = a.d_clean;
    for (Eigen::Index i = 0; i < a.d_obs.size(); ++i)
        a.d_obs[i] += cfg.observations.noise_std * gauss(rng_noise);

    Eigen::VectorXd cd = Eigen::VectorXd::Constant(
        a.d_obs.size(), cfg.observations.noise_std * cfg.observations.noise_std);
    a.truth_misfit = misfit(a.d_clean, a.d_obs, cd);

    std::vector<double> breakthrough(np, cfg.observations.forecast_time);
    for (Eigen::Index w = 0; w < np; ++w)
        for (Eigen::Index t = 0; t < nt; ++t)
            if (a.d_clean[t * np + w] > 0.01) {
                breakthrough[w] = times[t];
                break;
            }
    std::sort(breakthrough.begin(), breakthrough.end());
    a.breakthrough_median = breakthrough[breakthrough.size() / 2];

    save_experiment_config(cfg, p.config().string());

    {
        const auto& ws = ctx.wells.wells;
        Eigen::MatrixXd rows(ws.size(), 7);
        for (std::size_t k = 0; k < ws.size(); ++k) {
            int c = ws[k].cell;
            int i = c % ctx.grid.nx_plus1, j = c / ctx.grid.nx_plus1;
            rows(k, 0) = static_cast<double>(k);
            rows(k, 1) = c;
            rows(k, 2) = i;
            rows(k, 3) = j;
            rows(k, 4) = ctx.grid.x(i);
            rows(k, 5) = ctx.grid.y(j);
            rows(k, 6) = ws[k].rate;
        }
        write_csv(p.wells().string(), {"well", "cell", "i", "j", "x", "y", "rate"}, rows);
    }

    std::map<std::string, std::string> meta{
        {"transform", to_string(cfg.transform)},
        {"kernel_sigma", format_double(cfg.kernel.sigma)},
        {"kernel_rho", format_double(cfg.kernel.rho)}};
    write_field(p.truth_field().string(), ctx.grid, a.x_true, meta);

    std::vector<std::string> oh{"time"};
    for (Eigen::Index w = 0; w < np; ++w) oh.push_back("p" + std::to_string(w));
    Eigen::MatrixXd obs_rows(nt, np + 1), clean_rows(nt, np + 1);
    for (Eigen::Index t = 0; t < nt; ++t) {
        obs_rows(t, 0) = clean_rows(t, 0) = times[t];
        obs_rows.row(t).tail(np) = a.d_obs.segment(t * np, np).transpose();
        clean_rows.row(t).tail(np) = a.d_clean.segment(t * np, np).transpose();
    }
    write_csv(p.obs().string(), oh, obs_rows);
    write_csv(p.obs_clean().string(), oh, clean_rows);

    Eigen::MatrixXd fc(np, 2);
    for (Eigen::Index w = 0; w < np; ++w) {
        fc(w, 0) = static_cast<double>(w);
        fc(w, 1) = a.forecast[w];
    }
    write_csv(p.truth_forecast().string(), {"well", "water_cut"}, fc);

    json man = load_manifest(p);
    man["config"] = json::parse(cfg.canonical_json());
    man["config_hash"] = hash_hex(cfg.config_hash());
    man["seeds"]["master"] = cfg.seed;
    man["seeds"]["truth-field"] = seed_for(cfg.seed, "truth-field");
    man["seeds"]["obs-noise"] = seed_for(cfg.seed, "obs-noise");
    man["truth"]["misfit"] = a.truth_misfit;
    man["truth"]["breakthrough_median"] = a.breakthrough_median;
    man["truth"]["embedding_doubled"] = ctx.cov->embedding().doubled;
    store_manifest(p, man);
    return a;
}

PriorArtifacts run_prior_stage(const ExperimentConfig& cfg, const std::string& out_dir) {
    Paths p(out_dir);
    Context ctx(cfg);
    Eigen::VectorXd d_obs = flat_observations(read_csv(p.obs().string()));
    AssimilationProblem prob = ctx.problem(d_obs, nullptr);

    std::mt19937_64 rng(seed_for(cfg.seed, "ensemble"));
    Ensemble ens = init_ensemble(prob, cfg.ensemble_size, rng);

    fs::create_directories(p.anchors().parent_path());
    write_csv(p.anchors().string(), member_header("x", ens.anchors.rows()),
              with_member_column(ens.anchors));
    write_csv(p.perturbed().string(), member_header("d", ens.perturbed_obs.rows()),
              with_member_column(ens.perturbed_obs));

    json man = load_manifest(p);
    man["seeds"]["ensemble"] = seed_for(cfg.seed, "ensemble");
    man["prior"]["size"] = cfg.ensemble_size;
    store_manifest(p, man);

    PriorArtifacts a;
    a.anchors = ens.anchors;
    a.perturbed_obs = ens.perturbed_obs;
    return a;
}

AssimilationArtifacts run_assimilation_stage(const ExperimentConfig& cfg,
                                             const std::string& out_dir, Method method) {
    Paths p(out_dir);
    Context ctx(cfg);
    Eigen::VectorXd d_obs = flat_observations(read_csv(p.obs().string()));
    auto fm = std::make_shared<ForwardModel>(make_forward_model(cfg, false));
    AssimilationProblem prob = ctx.problem(d_obs, fm);

    Ensemble ens;
    ens.anchors = strip_member_column(read_csv(p.anchors().string()));
    ens.perturbed_obs = strip_member_column(read_csv(p.perturbed().string()));
    ens.members = ens.anchors;

    AssimilationArtifacts a;
    a.result = run_assimilation(prob, method, cfg.lm, ens, InversePolicy::Auto);
    a.misfit_obs = member_misfits(a.result.predictions, d_obs, prob.cd_diag);
    a.misfit_pert =
        member_misfits(a.result.predictions, a.result.ensemble.perturbed_obs, prob.cd_diag);

    fs::create_directories(p.mdir(method));
    {
        const auto& recs = a.result.iterations;
        Eigen::MatrixXd rows(recs.size(), 5);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            rows(i, 0) = recs[i].iteration;
            rows(i, 1) = recs[i].lambda;
            rows(i, 2) = recs[i].mean_misfit;
            rows(i, 3) = recs[i].mean_misfit_obs;
            rows(i, 4) = recs[i].accepted ? 1.0 : 0.0;
        }
        write_csv(p.iterations(method).string(),
                  {"iteration", "lambda", "mean_misfit_perturbed", "mean_misfit_observed",
                   "accepted"},
                  rows);
    }
    write_csv(p.members(method).string(),
              member_header("x", a.result.ensemble.members.rows()),
              with_member_column(a.result.ensemble.members));
    write_csv(p.predictions(method).string(),
              member_header("d", a.result.predictions.rows()),
              with_member_column(a.result.predictions));
    {
        Eigen::MatrixXd rows(a.misfit_obs.size(), 3);
        for (Eigen::Index i = 0; i < a.misfit_obs.size(); ++i)
            rows.row(i) << static_cast<double>(i), a.misfit_obs[i], a.misfit_pert[i];
        write_csv(p.misfits(method).string(),
                  {"member", "misfit_observed", "misfit_perturbed"}, rows);
    }

    json man = load_manifest(p);
    json& mm = man["methods"][to_string(method)];
    mm["iterations"] = a.result.iterations.size();
    mm["converged"] = a.result.converged;
    mm["hit_max_iterations"] = a.result.hit_max_iterations;
    mm["stopped_on_rejections"] = a.result.rejected_streak_stop;
    mm["final_mean_misfit_observed"] = a.misfit_obs.mean();
    mm["final_mean_misfit_perturbed"] = a.misfit_pert.mean();
    store_manifest(p, man);
    return a;
}

WeightArtifacts run_weight_stage(const ExperimentConfig& cfg, const std::string& out_dir,
                                 Method method) {
    Paths p(out_dir);
    Context ctx(cfg);
    Eigen::VectorXd d_obs = flat_observations(read_csv(p.obs().string()));
    AssimilationProblem prob = ctx.problem(d_obs, nullptr);

    Ensemble ens;
    ens.members = strip_member_column(read_csv(p.members(method).string()));
    Eigen::MatrixXd predictions = strip_member_column(read_csv(p.predictions(method).string()));

    WeightArtifacts a;
    a.weights = (method == Method::Hybrid)
                    ? hybrid_weights(ens, predictions, prob)
                    : ies_weights(ens, predictions, prob);
    a.misfit_obs = member_misfits(predictions, d_obs, prob.cd_diag);
    a.correlation = pearson_correlation(a.weights.log_weights, a.misfit_obs);

    Eigen::MatrixXd rows(a.weights.weights.size(), 4);
    for (Eigen::Index i = 0; i < a.weights.weights.size(); ++i)
        rows.row(i) << static_cast<double>(i), a.weights.log_weights[i],
            a.weights.weights[i], a.misfit_obs[i];
    write_csv(p.weights(method).string(),
              {"member", "log_weight", "weight", "misfit_observed"}, rows);

    json man = load_manifest(p);
    json& mm = man["methods"][to_string(method)];
    mm["ess_raw"] = a.weights.ess;
    mm["correlation_raw"] = a.correlation;
    store_manifest(p, man);
    return a;
}

DenoiseArtifacts run_denoise_stage(const ExperimentConfig& cfg, const std::string& out_dir,
                                   Method method) {
    Paths p(out_dir);
    CsvTable t = read_csv(p.weights(method).string());
    Eigen::VectorXd lw = t.rows.col(1);
    Eigen::VectorXd misfit_obs = t.rows.col(3);

    DenoiseArtifacts a;
    a.model = resolve_noise_model(cfg, lw);
    Eigen::VectorXd denoised = denoise_log_weights(a.model, lw);
    a.weights = finalize_weights(denoised);
    a.correlation = pearson_correlation(denoised, misfit_obs);

    Eigen::MatrixXd rows(lw.size(), 5);
    for (Eigen::Index i = 0; i < lw.size(); ++i)
        rows.row(i) << static_cast<double>(i), lw[i], denoised[i], a.weights.weights[i],
            misfit_obs[i];
    write_csv(p.weights_denoised(method).string(),
              {"member", "log_weight_raw", "log_weight_denoised", "weight",
               "misfit_observed"},
              rows);

    json man = load_manifest(p);
    json& mm = man["methods"][to_string(method)];
    mm["noise_model"] = {{"sigma_o", a.model.sigma_o},
                         {"sigma_pr", a.model.sigma_pr},
                         {"nu", a.model.nu},
                         {"omega_pr", a.model.omega_pr}};
    if (cfg.noise_model.tune)
        man["seeds"]["tune-prior"] = seed_for(cfg.seed, "tune-prior");
    mm["ess_denoised"] = a.weights.ess;
    mm["correlation_denoised"] = a.correlation;
    store_manifest(p, man);
    return a;
}

ForecastArtifacts run_forecast_stage(const ExperimentConfig& cfg,
                                     const std::string& out_dir, Method method) {
    Paths p(out_dir);
    Eigen::MatrixXd members = strip_member_column(read_csv(p.members(method).string()));
    CsvTable truth_fc = read_csv(p.truth_forecast().string());
    ForwardModel fm = make_forward_model(cfg, true);
    const Eigen::Index np = static_cast<Eigen::Index>(fm.wells.producer_cells().size());
    const Eigen::Index ne = members.cols();

    ForecastArtifacts a;
    a.outcome = truth_fc.rows.col(1);
    a.member_forecasts.resize(ne, np);
    parallel_for(static_cast<int>(ne), cfg.threads, [&](int i) {
        Eigen::VectorXd full = fm.predict_from_x(members.col(i));
        a.member_forecasts.row(i) = full.tail(np).transpose();
    });

    std::vector<std::string> fh{"member"};
    for (Eigen::Index w = 0; w < np; ++w) fh.push_back("p" + std::to_string(w));
    Eigen::MatrixXd fm_rows(ne, np + 1);
    for (Eigen::Index i = 0; i < ne; ++i) {
        fm_rows(i, 0) = static_cast<double>(i);
        fm_rows.row(i).tail(np) = a.member_forecasts.row(i);
    }
    write_csv(p.forecast_members(method).string(), fh, fm_rows);

    Eigen::VectorXd w_uniform = Eigen::VectorXd::Constant(ne, 1.0 / ne);
    Eigen::VectorXd w_raw = read_csv(p.weights(method).string()).rows.col(2);
    Eigen::VectorXd w_den = read_csv(p.weights_denoised(method).string()).rows.col(3);

    auto summarize = [&](const Eigen::VectorXd& w, Eigen::Index well, double* mean,
                         double* sd, double* score) {
        Eigen::VectorXd s = a.member_forecasts.col(well);
        *mean = w.dot(s);
        double v = 0.0;
        for (Eigen::Index i = 0; i < ne; ++i) {
            double r = s[i] - *mean;
            v += w[i] * r * r;
        }
        double denom = 1.0 - w.squaredNorm();
        *sd = denom > 1e-12 ? std::sqrt(std::max(0.0, v / denom)) : 0.0;
        try {
            *score = log_score(s, w, a.outcome[well]);
        } catch (const NumericalError&) {
            *score = std::numeric_limits<double>::infinity();
        }
    };

    Eigen::MatrixXd rows(np, 11);
    for (Eigen::Index w = 0; w < np; ++w) {
        rows(w, 0) = static_cast<double>(w);
        rows(w, 1) = a.outcome[w];
        summarize(w_uniform, w, &rows(w, 2), &rows(w, 3), &rows(w, 4));
        summarize(w_raw, w, &rows(w, 5), &rows(w, 6), &rows(w, 7));
        summarize(w_den, w, &rows(w, 8), &rows(w, 9), &rows(w, 10));
    }
    write_csv(p.forecast_summary(method).string(),
              {"well", "outcome", "uniform_mean", "uniform_std", "uniform_score",
               "weighted_mean", "weighted_std", "weighted_score", "denoised_mean",
               "denoised_std", "denoised_score"},
              rows);

    // headline score: the field water cut, producers weighted by offtake rate.
    // Per-well scores blow up once a well has fully watered out (the member
    // spread there is solver jitter); the field aggregate keeps the live wells'
    // signal without a variance floor.
    Eigen::VectorXd wrate = producer_rate_weights(fm.wells);
    Eigen::VectorXd field = a.member_forecasts * wrate;
    const double field_outcome = a.outcome.dot(wrate);
    auto field_score = [&](const Eigen::VectorXd& w) {
        try {
            return log_score(field, w, field_outcome);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    json man = load_manifest(p);
    json& mm = man["methods"][to_string(method)];
    mm["forecast_field_outcome"] = field_outcome;
    mm["forecast_field_score_uniform"] = field_score(w_uniform);
    mm["forecast_field_score_weighted"] = field_score(w_raw);
    mm["forecast_field_score_denoised"] = field_score(w_den);
    store_manifest(p, man);
    return a;
}

std::vector<SweepPoint> run_sweep_stage(const ExperimentConfig& cfg,
                                        const std::string& out_dir, Method method) {
    if (cfg.sweep_exponents.empty())
        throw ConfigError("sweep exponent list is empty");
    Paths p(out_dir);
    // the sweep regularizes the weights the forecast actually uses, which are
    // the denoised ones; exponent 1 therefore reproduces the denoised column
    Eigen::VectorXd lw = read_csv(p.weights_denoised(method).string()).rows.col(2);
    CsvTable fc = read_csv(p.forecast_members(method).string());
    Eigen::MatrixXd forecasts = fc.rows.rightCols(fc.rows.cols() - 1);
    Eigen::VectorXd outcome = read_csv(p.truth_forecast().string()).rows.col(1);

    CsvTable wt = read_csv(p.wells().string());
    std::vector<double> q;
    for (Eigen::Index i = 0; i < wt.rows.rows(); ++i)
        if (wt.rows(i, 6) < 0.0) q.push_back(-wt.rows(i, 6));
    Eigen::VectorXd wrate = Eigen::Map<Eigen::VectorXd>(
        q.data(), static_cast<Eigen::Index>(q.size()));
    wrate /= wrate.sum();
    Eigen::VectorXd field = forecasts * wrate;
    const double field_outcome = outcome.dot(wrate);

    std::vector<SweepPoint> pts;
    for (double alpha : cfg.sweep_exponents) {
        WeightSet ws = power_regularize(lw, alpha);
        SweepPoint sp;
        sp.exponent = alpha;
        sp.ess = ws.ess;
        try {
            sp.score = log_score(field, ws.weights, field_outcome);
        } catch (const NumericalError&) {
            sp.score = std::numeric_limits<double>::infinity();
        }
        sp.log_density = -sp.score;
        pts.push_back(sp);
    }

    Eigen::MatrixXd rows(pts.size(), 4);
    for (std::size_t i = 0; i < pts.size(); ++i)
        rows.row(i) << pts[i].exponent, pts[i].ess, pts[i].score, pts[i].log_density;
    write_csv(p.sweep(method).string(), {"exponent", "ess", "score", "log_density"},
              rows);

    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].log_density > pts[best].log_density) best = i;
    json man = load_manifest(p);
    man["methods"][to_string(method)]["sweep_best_exponent"] = pts[best].exponent;
    store_manifest(p, man);
    return pts;
}

LandscapeArtifacts run_landscape_stage(const ExperimentConfig& cfg,
                                       const std::string& out_dir) {
    Paths p(out_dir);
    Context ctx(cfg);
    Eigen::VectorXd x_true = read_field(p.truth_field().string()).values;
    Eigen::VectorXd d_obs = flat_observations(read_csv(p.obs().string()));
    Eigen::MatrixXd anchors = strip_member_column(read_csv(p.anchors().string()));
    ForwardModel fm = make_forward_model(cfg, false);
    Eigen::VectorXd cd = Eigen::VectorXd::Constant(
        d_obs.size(), cfg.observations.noise_std * cfg.observations.noise_std);

    auto objective = [&](const Eigen::VectorXd& x) {
        double prior = 0.5 * x.dot(ctx.cov->apply_pinv(x));
        return prior + misfit(fm.predict_from_x(x), d_obs, cd);
    };

    LandscapeArtifacts a;
    a.slice = landscape_slice(x_true, -x_true, anchors.col(0), objective,
                              cfg.landscape.resolution, cfg.landscape.margin, cfg.threads);

    fs::create_directories(p.landscape_dir());
    const int res = cfg.landscape.resolution;
    Eigen::MatrixXd rows(res * res, 3);
    int r = 0;
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j, ++r)
            rows.row(r) << a.slice.alphas[i], a.slice.betas[j], a.slice.values(i, j);
    write_csv(p.landscape().string(), {"alpha", "beta", "objective"}, rows);

    Eigen::MatrixXd arows(3, 3);
    for (int k = 0; k < 3; ++k)
        arows.row(k) << static_cast<double>(k), a.slice.anchor_coords(k, 0),
            a.slice.anchor_coords(k, 1);
    write_csv(p.landscape_anchors().string(), {"anchor", "alpha", "beta"}, arows);

    json man = load_manifest(p);
    man["landscape"]["resolution"] = res;
    man["landscape"]["local_minima"] = find_local_minima(a.slice.values).size();
    store_manifest(p, man);
    return a;
}

void run_all(const ExperimentConfig& cfg, const std::string& out_dir) {
    run_truth_stage(cfg, out_dir);
    run_prior_stage(cfg, out_dir);
    for (Method m : cfg.methods) {
        run_assimilation_stage(cfg, out_dir, m);
        run_weight_stage(cfg, out_dir, m);
        run_denoise_stage(cfg, out_dir, m);
        run_forecast_stage(cfg, out_dir, m);
        run_sweep_stage(cfg, out_dir, m);
    }
    if (cfg.landscape.enabled) run_landscape_stage(cfg, out_dir);
}

} // namespace wrml
