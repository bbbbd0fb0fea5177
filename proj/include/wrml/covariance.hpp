#ifndef WRML_COVARIANCE_HPP
#define WRML_COVARIANCE_HPP

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "wrml/grid.hpp"

namespace wrml {

// Stationary kernel C(dx,dy) = sigma^2 (1 - r2/rho^2) exp(-r2/rho^2),
// r2 = dx^2 + dy^2. Oscillatory: one negative lobe, then decay to zero.
// Its 2D spectral density is nonnegative, so the kernel is a valid
// covariance even though it takes negative values.
struct CovarianceSpec {
    double sigma = 1.0;
    double rho = 1.0;
};

double covariance_value(const CovarianceSpec& spec, double dx, double dy);

// Diagnostics of one level-2 circulant embedding of the block-Toeplitz
// covariance matrix.
struct EmbeddingInfo {
    int mx = 0;               // embedded size in x (2*(nx+1) minimal)
    int my = 0;               // embedded size in y
    double min_surrogate = 0; // smallest eigenvalue surrogate
    double max_surrogate = 0; // largest eigenvalue surrogate
    bool doubled = false;     // true if the minimal embedding failed and was enlarged
    bool nonnegative = false; // surrogates >= -1e-8 * max (after clipping policy)
};

// Gaussian random field covariance operator on a Grid2D.
//
// The block-Toeplitz covariance is embedded in a block-circulant matrix with
// circulant blocks. Per block row j the minimal embedding has dimension
// 2*(nx+1) with first row (r_{0j},...,r_{nx j}, phi_j, r_{-nx j},...,r_{-1j});
// the padding slot phi_j is the kernel evaluated at the wrap-around lag
// (periodic extension). The same construction is applied at the block level.
// Eigenvalue surrogates are the 2D DFT of the embedded first column.
//
// Multiplication by C_x is exact for any surrogate signs: the restriction of
// the embedded matrix to the grid block never touches the padding slots.
// Sampling needs the spectral square root and therefore a nonnegative
// embedding; surrogates in [-1e-8*max, 0) are clipped to zero. A more
// negative spectrum triggers automatic doubling of the embedding (the
// wrap-around fill approaches the true periodization, whose spectrum is the
// sampled nonnegative spectral density) until positivity or the per-dimension
// size cap; past the cap, sample() throws NonPositiveEmbedding.
//
// Instances are immutable after construction; apply()/sample() allocate their
// own scratch buffers and may be called concurrently from several threads.
class CovarianceOperator {
public:
    CovarianceOperator(const CovarianceSpec& spec, const Grid2D& grid);
    ~CovarianceOperator();

    CovarianceOperator(const CovarianceOperator&) = delete;
    CovarianceOperator& operator=(const CovarianceOperator&) = delete;

    const Grid2D& grid() const { return grid_; }
    const CovarianceSpec& spec() const { return spec_; }
    const EmbeddingInfo& embedding() const { return info_; }

    // y = C_x v via FFT, O(N log N).
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

    // Draws `count` independent samples of N(mean, C_x), one per column.
    // Consecutive pairs of samples share one FFT (real and imaginary parts
    // of the complex spectral draw are independent).
    Eigen::MatrixXd sample(std::mt19937_64& rng, int count,
                           const Eigen::VectorXd& mean) const;

    // Dense N x N covariance, materialized lazily. Guarded to small grids.
    const Eigen::MatrixXd& dense() const;

    // x = C_x^+ v through a truncated eigendecomposition of the dense matrix
    // (relative cutoff 1e-8). Only available on small grids; larger problems
    // must use ensemble-subspace projections instead.
    Eigen::VectorXd apply_pinv(const Eigen::VectorXd& v) const;
    Eigen::MatrixXd apply_pinv(const Eigen::MatrixXd& v) const;

    // log det of the pseudo-inverse-consistent part of C_x (sum of log of
    // eigenvalues above the cutoff). Used by landscape diagnostics.
    double pinv_rank() const;

    static constexpr int dense_limit = 4096;
    static constexpr int embedding_cap = 1024; // per dimension
    static constexpr double surrogate_tol_rel = 1e-8;
    static constexpr double pinv_cutoff_rel = 1e-8;

private:
    struct Plans; // FFTW plans + embedded spectrum

    void build(int mx, int my);
    void ensure_eig() const;

    CovarianceSpec spec_;
    Grid2D grid_;
    EmbeddingInfo info_;
    std::unique_ptr<Plans> plans_;

    mutable std::optional<Eigen::MatrixXd> dense_;
    mutable std::optional<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> eig_;
};

} // namespace wrml

#endif
