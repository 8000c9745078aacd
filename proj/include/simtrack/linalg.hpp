#pragma once

#include <vector>

#include <Eigen/Dense>

namespace simtrack {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense symmetric indefinite LDL^T factorization (Bunch-Kaufman pivoting)
// with a reciprocal condition estimate and the inertia of the block-diagonal
// factor. This is the single factorization backing the KKT solves, the
// singularity test, and the Newton inertia check.
class SymSolver {
  public:
    explicit SymSolver(const Mat& A);

    // true when the factorization completed without an exactly zero pivot
    bool factorized() const { return ok_; }
    // reciprocal 1-norm condition estimate (0 when not factorized)
    double rcond() const { return rcond_; }
    // singularity in the working-precision sense: cond > condmax
    bool near_singular(double condmax = 1e14) const;

    // inertia of the factored matrix
    int n_pos() const { return n_pos_; }
    int n_neg() const { return n_neg_; }
    int n_zero() const { return n_zero_; }

    Vec solve(const Vec& rhs) const;
    Mat solve(const Mat& rhs) const;

  private:
    int n_;
    Mat af_;                  // lower-triangular factor data, column major
    std::vector<int> ipiv_;
    bool ok_ = false;
    double rcond_ = 0.0;
    int n_pos_ = 0, n_neg_ = 0, n_zero_ = 0;
};

}  // namespace simtrack
