#include "simtrack/linalg.hpp"

#include <cmath>
#include <stdexcept>

#include <lapacke.h>

namespace simtrack {

SymSolver::SymSolver(const Mat& A) : n_(static_cast<int>(A.rows())), af_(A), ipiv_(n_) {
    if (A.rows() != A.cols()) throw std::invalid_argument("SymSolver: matrix not square");
    if (n_ == 0) {
        ok_ = true;
        rcond_ = 1.0;
        return;
    }

    // 1-norm before the factor overwrites the matrix
    const double anorm = LAPACKE_dlansy(LAPACK_COL_MAJOR, '1', 'L', n_, af_.data(), n_);

    lapack_int info =
        LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n_, af_.data(), n_, ipiv_.data());
    if (info < 0) throw std::runtime_error("SymSolver: bad argument to dsytrf");
    if (info > 0) {
        // exactly singular D; keep ok_ = false, rcond_ = 0
        return;
    }
    ok_ = true;

    info = LAPACKE_dsycon(LAPACK_COL_MAJOR, 'L', n_, af_.data(), n_, ipiv_.data(), anorm,
                          &rcond_);
    if (info != 0) rcond_ = 0.0;

    // inertia from the 1x1 / 2x2 blocks of D
    for (int k = 0; k < n_;) {
        if (ipiv_[k] > 0) {
            const double d = af_(k, k);
            if (d > 0)
                ++n_pos_;
            else if (d < 0)
                ++n_neg_;
            else
                ++n_zero_;
            ++k;
        } else {
            // 2x2 pivot block [a b; b c]
            const double a = af_(k, k), b = af_(k + 1, k), c = af_(k + 1, k + 1);
            const double tr = a + c, det = a * c - b * b;
            const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
            const double l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);
            for (double l : {l1, l2}) {
                if (l > 0)
                    ++n_pos_;
                else if (l < 0)
                    ++n_neg_;
                else
                    ++n_zero_;
            }
            k += 2;
        }
    }
}

bool SymSolver::near_singular(double condmax) const {
    return !ok_ || rcond_ <= 0.0 || 1.0 / rcond_ > condmax;
}

Vec SymSolver::solve(const Vec& rhs) const {
    Mat out = solve(Mat(rhs));
    return out.col(0);
}

Mat SymSolver::solve(const Mat& rhs) const {
    if (!ok_) throw std::runtime_error("SymSolver: solve on failed factorization");
    if (rhs.rows() != n_) throw std::invalid_argument("SymSolver: rhs size mismatch");
    Mat x = rhs;
    if (n_ == 0 || rhs.cols() == 0) return x;
    lapack_int info =
        LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n_, static_cast<lapack_int>(rhs.cols()),
                       af_.data(), n_, const_cast<int*>(ipiv_.data()), x.data(), n_);
    if (info != 0) throw std::runtime_error("SymSolver: dsytrs failed");
    return x;
}

}  // namespace simtrack
