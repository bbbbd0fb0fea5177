#ifndef WRML_LINALG_HPP
#define WRML_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <functional>

#include "wrml/errors.hpp"

namespace wrml {

// Centered, scaled deviations: (A - mean) / sqrt(Ne - 1), so dev*dev^T is the
// sample covariance. Columns are ensemble members.
Eigen::MatrixXd deviations(const Eigen::MatrixXd& members);

// Truncated SVD pseudo-inverse of a tall matrix, kept in factored form.
// Singular values below rel_cutoff * s_max are dropped.
class TruncatedPinv {
public:
    TruncatedPinv(const Eigen::MatrixXd& a, double rel_cutoff);

    int rank() const { return rank_; }
    // pinv(A) * b
    Eigen::MatrixXd apply(const Eigen::MatrixXd& b) const;
    // pinv(A)^T * b
    Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& b) const;
    // dense pinv(A), rows x cols swapped relative to A
    Eigen::MatrixXd dense() const;

private:
    Eigen::MatrixXd u_, v_;  // truncated factors
    Eigen::VectorXd sinv_;
    int rank_ = 0;
};

// Cholesky of an SPD matrix with one retry after adding
// 1e-10 * trace(V)/n to the diagonal; failure after the retry throws.
class SpdSolver {
public:
    explicit SpdSolver(const Eigen::MatrixXd& v);

    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
    double log_det() const;
    bool jittered() const { return jittered_; }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    bool jittered_ = false;
};

// log(sum(exp(lw))) evaluated stably.
double log_sum_exp(const Eigen::VectorXd& lw);

// Runs fn(i) for i in [0, n) across a fixed-size thread pool with a static
// partition; results must be written to disjoint slots so the outcome is
// independent of scheduling. threads <= 1 runs inline.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace wrml

#endif
