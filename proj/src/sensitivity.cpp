#include "simtrack/sensitivity.hpp"

#include <cmath>
#include <stdexcept>

#include "simtrack/linalg.hpp"

namespace simtrack {

SensitivityMatrix kkt_sensitivities(const NlpProblem& p, const KktSolution& sol) {
    if (!p.mech) throw std::invalid_argument("kkt_sensitivities: missing mechanism");
    if (!solve_ok(sol.status))
        throw std::invalid_argument("kkt_sensitivities: solution did not converge");

    const Mechanism& m = *p.mech;
    const int n = m.n_species();
    const int mc = static_cast<int>(p.cons.C.rows());
    const int np = static_cast<int>(p.pins.indices.size());
    const int na = static_cast<int>(sol.active.size());
    const int mr = mc + np + na;

    SensitivityMatrix sens;
    sens.pins = p.pins.indices;
    sens.r0 = p.pins.values;

    // Theorem hypotheses: strictly complementary active bounds, otherwise the
    // solution map need not be differentiable -- flag instead of computing.
    for (int i : sol.active)
        if (std::abs(sol.mu[i]) <= 1e-10) return sens;

    const Vec F1 = eval_f1(m, sol.x);
    const Mat J1 = eval_j1(m, sol.x);
    const Mat T = residual_curvature(m, sol.x, F1);
    const Mat L = J1.transpose() * J1 + 0.5 * (T + T.transpose());

    Mat A = Mat::Zero(mr, n);
    if (mc > 0) A.topRows(mc) = p.cons.C;
    for (int j = 0; j < np; ++j) A(mc + j, p.pins.indices[j]) = 1.0;
    for (int a = 0; a < na; ++a) A(mc + np + a, sol.active[a]) = 1.0;

    // equilibrated symmetric KKT matrix, one factorization for all columns
    const double eta = std::max(L.cwiseAbs().maxCoeff(), 1e-300);
    Mat K = Mat::Zero(n + mr, n + mr);
    K.topLeftCorner(n, n) = L / eta;
    K.bottomLeftCorner(mr, n) = A;
    K.topRightCorner(n, mr) = A.transpose();

    SymSolver S(K);
    if (S.near_singular(1e14)) return sens;

    // differentiating the KKT conditions in r leaves only the pin rows:
    //   [L, A'; A, 0] [dx; w] = [0; e_pin],  dLambda = -eta * w
    Mat rhs = Mat::Zero(n + mr, np);
    for (int j = 0; j < np; ++j) rhs(n + mc + j, j) = 1.0;
    Mat W = S.solve(rhs);
    const Mat corr = S.solve(Mat(K * W - rhs));  // one refinement pass
    if (corr.allFinite()) W -= corr;

    sens.dx_dr = W.topRows(n);
    const Mat dLam = -eta * W.bottomRows(mr);
    sens.dlambda_dr = dLam.topRows(mc + np);
    sens.dmu_dr = Mat::Zero(n, np);
    for (int a = 0; a < na; ++a) sens.dmu_dr.row(sol.active[a]) = dLam.row(mc + np + a);

    // rows fixed by construction are exact, not merely solved
    for (int j = 0; j < np; ++j) {
        sens.dx_dr.row(p.pins.indices[j]).setZero();
        sens.dx_dr(p.pins.indices[j], j) = 1.0;
    }
    for (int a : sol.active) sens.dx_dr.row(a).setZero();

    sens.reliable = true;
    return sens;
}

Vec tangent_predict(const KktSolution& sol, const SensitivityMatrix& sens, const Vec& r_new) {
    if (!sens.reliable) throw std::invalid_argument("tangent_predict: unreliable sensitivities");
    if (r_new.size() != sens.r0.size())
        throw std::invalid_argument("tangent_predict: parameter dimension mismatch");
    return sol.x + sens.dx_dr * (r_new - sens.r0);
}

}  // namespace simtrack
