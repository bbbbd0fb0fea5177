#ifndef WRML_FLOW_HPP
#define WRML_FLOW_HPP

#include <Eigen/Dense>
#include <vector>

#include "wrml/grid.hpp"

namespace wrml {

// Incompressible two-phase flow (water displacing oil) on the grid's lattice,
// with each node acting as the center of a uniform hx*hy finite-volume cell.
// Quadratic relative permeabilities krw = s^2, kro = (1-s)^2; no-flow outer
// boundaries; rate-controlled wells as point sources; s(x,0) = 0.
struct FlowConfig {
    double porosity = 0.2;
    double mu_w = 1.0;
    double mu_o = 1.0;
    double dt = 0.1;          // outer transport step
    double cfl_safety = 0.9;  // fraction of the monotonicity limit
    int max_substeps = 1000;  // per outer step
};

struct Well {
    int cell = 0;
    double rate = 0.0; // volumetric, > 0 injector, < 0 producer
};

struct WellSet {
    std::vector<Well> wells;

    std::vector<int> producer_cells() const;
    Eigen::VectorXd source(int ncells) const;
    // Rates must balance to zero for the incompressible pressure system.
    void validate(int ncells) const;
};

// Four equal-rate injectors at the domain corners balanced by nine equal-rate
// producers on the uniform 3x3 lattice spanning [0.05, 0.95] of each side
// (the {0.1, 1.0, 1.9} coordinates of the [0,2]^2 domain).
WellSet standard_well_layout(const Grid2D& grid, double total_injection_rate);

double total_mobility(const FlowConfig& cfg, double s);
double fractional_flow(const FlowConfig& cfg, double s);

struct PressureSolution {
    Eigen::VectorXd p;  // cell pressures, gauge p[0] = 0
    Eigen::VectorXd fx; // flux (i,j)->(i+1,j), index j*(nx_plus1-1)+i
    Eigen::VectorXd fy; // flux (i,j)->(i,j+1), index j*nx_plus1+i
};

// TPFA with harmonic averaging of K*lambda_t(s) across faces. The singular
// incompressible system is gauged by pinning cell 0 to zero pressure; fluxes
// are conservative in every cell to solver precision.
PressureSolution pressure_solve(const Grid2D& grid, const Eigen::VectorXd& K,
                                const Eigen::VectorXd& s, const WellSet& wells,
                                const FlowConfig& cfg);

// Advances s over `duration` with frozen fluxes, explicit upwind transport and
// automatic substepping at the monotonicity (CFL) limit. Injectors add pure
// water, producers remove water at the cell's fractional flow. Returns the
// number of substeps taken; throws CFLViolation past cfg.max_substeps.
// produced_water, when given, accumulates the water volume removed at
// producers over the step, so stored + produced - injected closes the budget.
int saturation_step(const Grid2D& grid, Eigen::VectorXd& s,
                    const PressureSolution& flux, const WellSet& wells,
                    const FlowConfig& cfg, double duration,
                    double* produced_water = nullptr);

struct WaterCutTable {
    std::vector<double> times;
    std::vector<int> producer_cells;
    Eigen::MatrixXd values; // times x producers, fractional flow at producer

    // Data vector layout used throughout: time-major, producers fastest.
    Eigen::VectorXd flat() const;
};

// IMPES: one pressure solve per observation interval, then transport in
// cfg.dt outer steps (each internally substepped) to the next observation
// time, recording the water cut at every producer.
WaterCutTable simulate(const Grid2D& grid, const Eigen::VectorXd& K,
                       const WellSet& wells, const FlowConfig& cfg,
                       const std::vector<double>& obs_times);

} // namespace wrml

#endif
