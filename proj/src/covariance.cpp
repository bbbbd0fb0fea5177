#include "wrml/covariance.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

namespace wrml {

double covariance_value(const CovarianceSpec& spec, double dx, double dy) {
    const double r2 = (dx * dx + dy * dy) / (spec.rho * spec.rho);
    return spec.sigma * spec.sigma * (1.0 - r2) * std::exp(-r2);
}

namespace {

// FFTW plan creation is not thread-safe; execution with new arrays is.
std::mutex fftw_planner_mutex;

// Signed lag for slot k on a torus of m points: 0..m/2 map to themselves,
// the upper half maps to negative lags. Slot m/2 is the padding slot of the
// minimal embedding; periodic extension evaluates the kernel there too.
int torus_lag(int k, int m) { return (k <= m / 2) ? k : k - m; }

} // namespace

struct CovarianceOperator::Plans {
    int mx = 0, my = 0;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    std::vector<double> spectrum_raw;     // exact surrogates, used by apply()
    std::vector<double> spectrum_sqrt;    // sqrt of clipped surrogates, sampling
    bool sampling_ok = false;

    ~Plans() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex);
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
    }
};

CovarianceOperator::CovarianceOperator(const CovarianceSpec& spec,
                                       const Grid2D& grid)
    : spec_(spec), grid_(grid) {
    if (!(spec.sigma >= 0.0) || !(spec.rho > 0.0))
        throw ConfigError("covariance needs sigma >= 0 and rho > 0");
    const int mx0 = 2 * grid_.nx_plus1;
    const int my0 = 2 * grid_.ny_plus1;
    build(mx0, my0);
    // The restriction to the grid block is exact at any embedding size, but
    // the spectral square root needs nonnegative surrogates. The wrap-around
    // fill converges to the true periodization as the torus grows, so keep
    // doubling until positivity or the size cap.
    int mult = 1;
    while (!plans_->sampling_ok &&
           2 * mult * std::max(mx0, my0) <= embedding_cap) {
        mult *= 2;
        build(mult * mx0, mult * my0);
        info_.doubled = true;
    }
    info_.nonnegative = plans_->sampling_ok;
}

CovarianceOperator::~CovarianceOperator() = default;

void CovarianceOperator::build(int mx, int my) {
    auto plans = std::make_unique<Plans>();
    plans->mx = mx;
    plans->my = my;
    const std::size_t m = static_cast<std::size_t>(mx) * my;

    // First column of the embedded matrix: kernel at torus lags.
    std::vector<std::complex<double>> col(m);
    for (int j = 0; j < my; ++j) {
        const double dy = torus_lag(j, my) * grid_.hy;
        for (int i = 0; i < mx; ++i) {
            const double dx = torus_lag(i, mx) * grid_.hx;
            col[static_cast<std::size_t>(j) * mx + i] =
                covariance_value(spec_, dx, dy);
        }
    }

    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex);
        auto* buf = reinterpret_cast<fftw_complex*>(col.data());
        // FFTW_UNALIGNED so execution with ordinary std::vector buffers is valid.
        plans->fwd = fftw_plan_dft_2d(my, mx, buf, buf, FFTW_FORWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans->bwd = fftw_plan_dft_2d(my, mx, buf, buf, FFTW_BACKWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!plans->fwd || !plans->bwd)
            throw LinearSolveFailure("FFTW plan creation failed");
    }

    fftw_execute_dft(plans->fwd, reinterpret_cast<fftw_complex*>(col.data()),
                     reinterpret_cast<fftw_complex*>(col.data()));

    plans->spectrum_raw.resize(m);
    plans->spectrum_sqrt.resize(m);
    double maxs = 0.0, mins = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double s = col[k].real(); // symmetric embedding: spectrum real
        plans->spectrum_raw[k] = s;
        maxs = std::max(maxs, s);
        mins = std::min(mins, s);
    }
    const double tol = surrogate_tol_rel * maxs;
    plans->sampling_ok = (mins >= -tol);
    for (std::size_t k = 0; k < m; ++k) {
        const double s = plans->spectrum_raw[k];
        plans->spectrum_sqrt[k] = (s > 0.0) ? std::sqrt(s) : 0.0;
    }

    info_.mx = mx;
    info_.my = my;
    info_.min_surrogate = mins;
    info_.max_surrogate = maxs;
    plans_ = std::move(plans);
}

Eigen::VectorXd CovarianceOperator::apply(const Eigen::VectorXd& v) const {
    if (v.size() != grid_.size())
        throw DimensionMismatch("apply: vector length does not match grid");
    const int mx = plans_->mx, my = plans_->my;
    const std::size_t m = static_cast<std::size_t>(mx) * my;
    std::vector<std::complex<double>> buf(m, std::complex<double>(0, 0));

    for (int j = 0; j < grid_.ny_plus1; ++j)
        for (int i = 0; i < grid_.nx_plus1; ++i)
            buf[static_cast<std::size_t>(j) * mx + i] = v[grid_.index(i, j)];

    auto* fbuf = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_execute_dft(plans_->fwd, fbuf, fbuf);
    for (std::size_t k = 0; k < m; ++k) buf[k] *= plans_->spectrum_raw[k];
    fftw_execute_dft(plans_->bwd, fbuf, fbuf);

    const double scale = 1.0 / static_cast<double>(m);
    Eigen::VectorXd out(grid_.size());
    for (int j = 0; j < grid_.ny_plus1; ++j)
        for (int i = 0; i < grid_.nx_plus1; ++i)
            out[grid_.index(i, j)] =
                buf[static_cast<std::size_t>(j) * mx + i].real() * scale;
    return out;
}

Eigen::MatrixXd CovarianceOperator::sample(std::mt19937_64& rng, int count,
                                           const Eigen::VectorXd& mean) const {
    if (mean.size() != grid_.size())
        throw DimensionMismatch("sample: mean length does not match grid");
    if (count < 0) throw ConfigError("sample: negative count");
    if (!plans_->sampling_ok)
        throw NonPositiveEmbedding(
            "circulant embedding has negative eigenvalue surrogates beyond "
            "tolerance even at the size cap; cannot take spectral square root",
            info_.min_surrogate);

    const int mx = plans_->mx, my = plans_->my;
    const std::size_t m = static_cast<std::size_t>(mx) * my;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd out(grid_.size(), count);
    std::vector<std::complex<double>> buf(m);
    auto* fbuf = reinterpret_cast<fftw_complex*>(buf.data());
    // Unnormalized backward FFT of unit complex noise carries m times the
    // torus covariance in each of its real and imaginary parts.
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));

    // Complex white noise shaped by sqrt of the spectrum; real and imaginary
    // parts of the back-transform are two independent N(0, C_x) draws.
    for (int c = 0; c < count; c += 2) {
        for (std::size_t k = 0; k < m; ++k) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            buf[k] = std::complex<double>(re, im) * plans_->spectrum_sqrt[k];
        }
        fftw_execute_dft(plans_->bwd, fbuf, fbuf);
        for (int j = 0; j < grid_.ny_plus1; ++j)
            for (int i = 0; i < grid_.nx_plus1; ++i) {
                const auto z = buf[static_cast<std::size_t>(j) * mx + i] * scale;
                const int idx = grid_.index(i, j);
                out(idx, c) = mean[idx] + z.real();
                if (c + 1 < count) out(idx, c + 1) = mean[idx] + z.imag();
            }
    }
    return out;
}

const Eigen::MatrixXd& CovarianceOperator::dense() const {
    if (dense_) return *dense_;
    const int n = grid_.size();
    if (n > dense_limit)
        throw ConfigError("dense covariance is limited to small grids");
    // Kernel value depends on the lag only; tabulate once.
    const int nx = grid_.nx_plus1, ny = grid_.ny_plus1;
    Eigen::MatrixXd table(2 * nx - 1, 2 * ny - 1);
    for (int dj = -(ny - 1); dj <= ny - 1; ++dj)
        for (int di = -(nx - 1); di <= nx - 1; ++di)
            table(di + nx - 1, dj + ny - 1) =
                covariance_value(spec_, di * grid_.hx, dj * grid_.hy);
    Eigen::MatrixXd c(n, n);
    for (int j2 = 0; j2 < ny; ++j2)
        for (int i2 = 0; i2 < nx; ++i2)
            for (int j1 = 0; j1 < ny; ++j1)
                for (int i1 = 0; i1 < nx; ++i1)
                    c(grid_.index(i1, j1), grid_.index(i2, j2)) =
                        table(i1 - i2 + nx - 1, j1 - j2 + ny - 1);
    dense_ = std::move(c);
    return *dense_;
}

void CovarianceOperator::ensure_eig() const {
    if (eig_) return;
    eig_.emplace(dense());
    if (eig_->info() != Eigen::Success)
        throw LinearSolveFailure("eigendecomposition of dense covariance failed");
}

Eigen::MatrixXd CovarianceOperator::apply_pinv(const Eigen::MatrixXd& v) const {
    if (v.rows() != grid_.size())
        throw DimensionMismatch("apply_pinv: row count does not match grid");
    ensure_eig();
    const auto& evals = eig_->eigenvalues();
    const double cutoff = pinv_cutoff_rel * evals.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(evals.size());
    for (int k = 0; k < evals.size(); ++k)
        if (evals[k] > cutoff) inv[k] = 1.0 / evals[k];
    return eig_->eigenvectors() *
           (inv.asDiagonal() * (eig_->eigenvectors().transpose() * v));
}

Eigen::VectorXd CovarianceOperator::apply_pinv(const Eigen::VectorXd& v) const {
    return apply_pinv(Eigen::MatrixXd(v)).col(0);
}

double CovarianceOperator::pinv_rank() const {
    ensure_eig();
    const auto& evals = eig_->eigenvalues();
    const double cutoff = pinv_cutoff_rel * evals.cwiseAbs().maxCoeff();
    return static_cast<double>((evals.array() > cutoff).count());
}

} // namespace wrml
