#include "wrml/linalg.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace wrml {

Eigen::MatrixXd deviations(const Eigen::MatrixXd& members) {
    const Eigen::Index ne = members.cols();
    if (ne < 2) throw DegenerateEnsemble("deviations need at least 2 members");
    const Eigen::VectorXd mean = members.rowwise().mean();
    return (members.colwise() - mean) / std::sqrt(static_cast<double>(ne - 1));
}

TruncatedPinv::TruncatedPinv(const Eigen::MatrixXd& a, double rel_cutoff) {
    if (!a.allFinite()) throw NonFiniteInput("pinv of non-finite matrix");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = (s.size() > 0 ? s[0] : 0.0) * rel_cutoff;
    int r = 0;
    while (r < s.size() && s[r] > cutoff && s[r] > 0.0) ++r;
    if (r == 0) throw RankDeficient("matrix has no singular values above cutoff");
    rank_ = r;
    u_ = svd.matrixU().leftCols(r);
    v_ = svd.matrixV().leftCols(r);
    sinv_ = s.head(r).cwiseInverse();
}

Eigen::MatrixXd TruncatedPinv::apply(const Eigen::MatrixXd& b) const {
    return v_ * (sinv_.asDiagonal() * (u_.transpose() * b));
}

Eigen::MatrixXd TruncatedPinv::apply_transpose(const Eigen::MatrixXd& b) const {
    return u_ * (sinv_.asDiagonal() * (v_.transpose() * b));
}

Eigen::MatrixXd TruncatedPinv::dense() const {
    return v_ * sinv_.asDiagonal() * u_.transpose();
}

SpdSolver::SpdSolver(const Eigen::MatrixXd& v) {
    if (v.rows() != v.cols()) throw DimensionMismatch("SPD matrix must be square");
    llt_.compute(v);
    if (llt_.info() != Eigen::Success) {
        const double jitter = 1e-10 * v.trace() / static_cast<double>(v.rows());
        Eigen::MatrixXd vj = v;
        vj.diagonal().array() += jitter;
        llt_.compute(vj);
        jittered_ = true;
        if (llt_.info() != Eigen::Success)
            throw LinearSolveFailure("SPD factorization failed after jitter");
    }
}

double SpdSolver::log_det() const {
    // |V| = prod(L_kk)^2
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

double log_sum_exp(const Eigen::VectorXd& lw) {
    if (lw.size() == 0) throw DegenerateEnsemble("empty log-weight vector");
    const double m = lw.maxCoeff();
    if (!std::isfinite(m)) throw NonFiniteInput("non-finite log weights");
    return m + std::log((lw.array() - m).exp().sum());
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0)
        threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error = nullptr;
    std::mutex err_mutex;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (int i = t; i < n; i += threads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace wrml
