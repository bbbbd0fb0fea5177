#include "wrml/flow.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>

namespace wrml {

std::vector<int> WellSet::producer_cells() const {
    std::vector<int> cells;
    for (const auto& w : wells)
        if (w.rate < 0.0) cells.push_back(w.cell);
    return cells;
}

Eigen::VectorXd WellSet::source(int ncells) const {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(ncells);
    for (const auto& w : wells) q[w.cell] += w.rate;
    return q;
}

void WellSet::validate(int ncells) const {
    double net = 0.0, gross = 0.0;
    for (const auto& w : wells) {
        if (w.cell < 0 || w.cell >= ncells)
            throw ConfigError("well cell index out of range");
        if (!std::isfinite(w.rate)) throw NonFiniteInput("well rate not finite");
        net += w.rate;
        gross += std::abs(w.rate);
    }
    if (gross > 0.0 && std::abs(net) > 1e-12 * gross)
        throw SingularSystem("well rates do not balance; no-flow boundaries "
                             "require zero net source");
}

WellSet standard_well_layout(const Grid2D& grid, double total_injection_rate) {
    if (!(total_injection_rate > 0.0))
        throw ConfigError("total injection rate must be positive");
    const int nx = grid.nx_plus1 - 1, ny = grid.ny_plus1 - 1;
    WellSet ws;
    const double inj = total_injection_rate / 4.0;
    ws.wells.push_back({grid.index(0, 0), inj});
    ws.wells.push_back({grid.index(nx, 0), inj});
    ws.wells.push_back({grid.index(0, ny), inj});
    ws.wells.push_back({grid.index(nx, ny), inj});
    // Producers sit on the 3x3 lattice at 5%, 50%, 95% of each axis. The
    // outer pair is an offset and its exact mirror so that a rounding tie
    // cannot skew the pattern off the domain symmetry.
    const double prod = -total_injection_rate / 9.0;
    const int lx = static_cast<int>(std::lround(0.05 * nx));
    const int ly = static_cast<int>(std::lround(0.05 * ny));
    const int xs[3] = {lx, static_cast<int>(std::lround(0.5 * nx)), nx - lx};
    const int ys[3] = {ly, static_cast<int>(std::lround(0.5 * ny)), ny - ly};
    for (int j : ys)
        for (int i : xs) ws.wells.push_back({grid.index(i, j), prod});
    return ws;
}

double total_mobility(const FlowConfig& cfg, double s) {
    return s * s / cfg.mu_w + (1.0 - s) * (1.0 - s) / cfg.mu_o;
}

double fractional_flow(const FlowConfig& cfg, double s) {
    const double lw = s * s / cfg.mu_w;
    return lw / (lw + (1.0 - s) * (1.0 - s) / cfg.mu_o);
}

namespace {

// Largest slope of the fractional flow over [0,1]; bounds the wave speed for
// the explicit upwind scheme. Analytic derivative scanned on a fine lattice.
double max_fractional_flow_slope(const FlowConfig& cfg) {
    double best = 0.0;
    const int n = 2000;
    for (int k = 0; k <= n; ++k) {
        const double s = static_cast<double>(k) / n;
        const double a = s * s / cfg.mu_w;
        const double b = (1.0 - s) * (1.0 - s) / cfg.mu_o;
        const double da = 2.0 * s / cfg.mu_w;
        const double db = -2.0 * (1.0 - s) / cfg.mu_o;
        const double d = (da * b - a * db) / ((a + b) * (a + b));
        best = std::max(best, d);
    }
    return best;
}

void check_inputs(const Grid2D& grid, const Eigen::VectorXd& K,
                  const Eigen::VectorXd& s) {
    if (K.size() != grid.size() || s.size() != grid.size())
        throw DimensionMismatch("field length does not match grid");
    for (Eigen::Index k = 0; k < K.size(); ++k)
        if (!std::isfinite(K[k]) || K[k] <= 0.0)
            throw NonFiniteInput("permeability must be positive and finite");
}

} // namespace

PressureSolution pressure_solve(const Grid2D& grid, const Eigen::VectorXd& K,
                                const Eigen::VectorXd& s, const WellSet& wells,
                                const FlowConfig& cfg) {
    check_inputs(grid, K, s);
    wells.validate(grid.size());
    const int nxp = grid.nx_plus1, nyp = grid.ny_plus1;
    const int n = grid.size();

    Eigen::VectorXd mob(n);
    for (int c = 0; c < n; ++c) mob[c] = K[c] * total_mobility(cfg, s[c]);

    // Face transmissibilities, harmonic average of K*lambda_t.
    auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };
    Eigen::VectorXd tx((nxp - 1) * nyp), ty(nxp * (nyp - 1));
    for (int j = 0; j < nyp; ++j)
        for (int i = 0; i + 1 < nxp; ++i)
            tx[j * (nxp - 1) + i] = grid.hy / grid.hx *
                harm(mob[grid.index(i, j)], mob[grid.index(i + 1, j)]);
    for (int j = 0; j + 1 < nyp; ++j)
        for (int i = 0; i < nxp; ++i)
            ty[j * nxp + i] = grid.hx / grid.hy *
                harm(mob[grid.index(i, j)], mob[grid.index(i, j + 1)]);

    // Assemble the 5-point system with cell 0 pinned to p = 0 (gauge for the
    // pure-Neumann problem). Dropping row/column 0 keeps the matrix SPD; the
    // pinned cell's balance is implied by the zero net source.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * static_cast<std::size_t>(n));
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    auto couple = [&](int a, int b, double t) {
        diag[a] += t;
        diag[b] += t;
        if (a != 0 && b != 0) {
            trip.emplace_back(a, b, -t);
            trip.emplace_back(b, a, -t);
        }
    };
    for (int j = 0; j < nyp; ++j)
        for (int i = 0; i + 1 < nxp; ++i)
            couple(grid.index(i, j), grid.index(i + 1, j), tx[j * (nxp - 1) + i]);
    for (int j = 0; j + 1 < nyp; ++j)
        for (int i = 0; i < nxp; ++i)
            couple(grid.index(i, j), grid.index(i, j + 1), ty[j * nxp + i]);
    for (int c = 1; c < n; ++c) trip.emplace_back(c, c, diag[c]);
    trip.emplace_back(0, 0, 1.0);

    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd rhs = wells.source(n);
    rhs[0] = 0.0;

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    solver.compute(a);
    if (solver.info() != Eigen::Success)
        throw LinearSolveFailure("pressure system factorization failed");
    PressureSolution sol;
    sol.p = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
        throw LinearSolveFailure("pressure solve failed");

    sol.fx.resize(tx.size());
    sol.fy.resize(ty.size());
    for (int j = 0; j < nyp; ++j)
        for (int i = 0; i + 1 < nxp; ++i) {
            const int f = j * (nxp - 1) + i;
            sol.fx[f] = tx[f] * (sol.p[grid.index(i, j)] - sol.p[grid.index(i + 1, j)]);
        }
    for (int j = 0; j + 1 < nyp; ++j)
        for (int i = 0; i < nxp; ++i) {
            const int f = j * nxp + i;
            sol.fy[f] = ty[f] * (sol.p[grid.index(i, j)] - sol.p[grid.index(i, j + 1)]);
        }
    return sol;
}

int saturation_step(const Grid2D& grid, Eigen::VectorXd& s,
                    const PressureSolution& flux, const WellSet& wells,
                    const FlowConfig& cfg, double duration,
                    double* produced_water) {
    const int nxp = grid.nx_plus1, nyp = grid.ny_plus1;
    const int n = grid.size();
    if (s.size() != n) throw DimensionMismatch("saturation length mismatch");
    const double pv = cfg.porosity * grid.hx * grid.hy; // pore volume per cell
    const Eigen::VectorXd q = wells.source(n);

    // Stability limit: the update must be monotone in each cell's own value,
    // 1 - (dtau/pv) * f'(s) * (outflux + production) >= 0. Fluxes are frozen
    // over the step, so the limit is computed once.
    Eigen::VectorXd outflux = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < nyp; ++j)
        for (int i = 0; i + 1 < nxp; ++i) {
            const double v = flux.fx[j * (nxp - 1) + i];
            if (v > 0.0)
                outflux[grid.index(i, j)] += v;
            else
                outflux[grid.index(i + 1, j)] -= v;
        }
    for (int j = 0; j + 1 < nyp; ++j)
        for (int i = 0; i < nxp; ++i) {
            const double v = flux.fy[j * nxp + i];
            if (v > 0.0)
                outflux[grid.index(i, j)] += v;
            else
                outflux[grid.index(i, j + 1)] -= v;
        }
    for (int c = 0; c < n; ++c) outflux[c] += std::max(-q[c], 0.0);

    const double slope = max_fractional_flow_slope(cfg);
    double dtau_max = duration;
    for (int c = 0; c < n; ++c)
        if (outflux[c] > 0.0)
            dtau_max = std::min(dtau_max, cfg.cfl_safety * pv / (slope * outflux[c]));
    if (!(dtau_max > 0.0)) throw CFLViolation("nonpositive stable step");
    const int nsub = static_cast<int>(std::ceil(duration / dtau_max - 1e-12));
    if (nsub > cfg.max_substeps)
        throw CFLViolation("substep cap exceeded: needs " + std::to_string(nsub));
    const double dtau = duration / nsub;

    Eigen::VectorXd f(n), net(n);
    for (int step = 0; step < nsub; ++step) {
        for (int c = 0; c < n; ++c) f[c] = fractional_flow(cfg, s[c]);
        net.setZero();
        for (int j = 0; j < nyp; ++j)
            for (int i = 0; i + 1 < nxp; ++i) {
                const double v = flux.fx[j * (nxp - 1) + i];
                const int a = grid.index(i, j), b = grid.index(i + 1, j);
                const double fw = (v > 0.0 ? f[a] : f[b]) * v;
                net[a] -= fw;
                net[b] += fw;
            }
        for (int j = 0; j + 1 < nyp; ++j)
            for (int i = 0; i < nxp; ++i) {
                const double v = flux.fy[j * nxp + i];
                const int a = grid.index(i, j), b = grid.index(i, j + 1);
                const double fw = (v > 0.0 ? f[a] : f[b]) * v;
                net[a] -= fw;
                net[b] += fw;
            }
        for (int c = 0; c < n; ++c)
            net[c] += std::max(q[c], 0.0) + f[c] * std::min(q[c], 0.0);
        if (produced_water)
            for (int c = 0; c < n; ++c)
                if (q[c] < 0.0) *produced_water -= f[c] * q[c] * dtau;
        for (int c = 0; c < n; ++c)
            s[c] = std::clamp(s[c] + dtau / pv * net[c], 0.0, 1.0);
    }
    return nsub;
}

Eigen::VectorXd WaterCutTable::flat() const {
    Eigen::VectorXd d(values.rows() * values.cols());
    for (Eigen::Index t = 0; t < values.rows(); ++t)
        for (Eigen::Index w = 0; w < values.cols(); ++w)
            d[t * values.cols() + w] = values(t, w);
    return d;
}

WaterCutTable simulate(const Grid2D& grid, const Eigen::VectorXd& K,
                       const WellSet& wells, const FlowConfig& cfg,
                       const std::vector<double>& obs_times) {
    check_inputs(grid, K, Eigen::VectorXd::Zero(grid.size()));
    wells.validate(grid.size());
    for (std::size_t k = 0; k < obs_times.size(); ++k) {
        if (obs_times[k] <= 0.0) throw ConfigError("observation times must be positive");
        if (k > 0 && obs_times[k] <= obs_times[k - 1])
            throw ConfigError("observation times must be strictly increasing");
    }

    WaterCutTable table;
    table.times = obs_times;
    table.producer_cells = wells.producer_cells();
    table.values.resize(static_cast<Eigen::Index>(obs_times.size()),
                        static_cast<Eigen::Index>(table.producer_cells.size()));

    Eigen::VectorXd s = Eigen::VectorXd::Zero(grid.size());
    double t = 0.0;
    for (std::size_t k = 0; k < obs_times.size(); ++k) {
        const double t_target = obs_times[k];
        const PressureSolution flux = pressure_solve(grid, K, s, wells, cfg);
        // march in outer dt steps; the final one lands exactly on t_target
        while (t < t_target - 1e-12) {
            const double step = std::min(cfg.dt, t_target - t);
            saturation_step(grid, s, flux, wells, cfg, step);
            t += step;
        }
        t = t_target;
        for (std::size_t w = 0; w < table.producer_cells.size(); ++w)
            table.values(static_cast<Eigen::Index>(k),
                         static_cast<Eigen::Index>(w)) =
                fractional_flow(cfg, s[table.producer_cells[w]]);
    }
    return table;
}

} // namespace wrml
