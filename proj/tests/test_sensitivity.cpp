#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <stdexcept>

#include "doctest.h"
#include "simtrack/sensitivity.hpp"
#include "support.hpp"

using namespace simtrack;
using namespace testsup;

namespace {

// re-solve at shifted pins, warm-started from the base solution
Vec resolve_at(const NlpProblem& base, const KktSolution& sol, const Vec& r) {
    NlpProblem p = base;
    p.pins.values = r;
    SolverConfig cfg;
    cfg.tol_abs = 1e-12;
    const KktSolution s = ggn_solve(p, sol.x, cfg);
    REQUIRE(solve_ok(s.status));
    return s.x;
}

}  // namespace

TEST_CASE("tangents at the pinned solution: structure and finite differences") {
    const NlpProblem p = golden_problem();
    const KktSolution sol = ggn_solve(p, mech().anchor);
    REQUIRE(sol.status == SolveStatus::converged);

    const SensitivityMatrix sens = kkt_sensitivities(p, sol);
    REQUIRE(sens.reliable);
    REQUIRE(sens.dx_dr.rows() == 6);
    REQUIRE(sens.dx_dr.cols() == 1);
    CHECK(sens.pins == std::vector<int>{Sp::H2O});
    CHECK(sens.r0(0) == 3.0);

    // pinned row is exactly the identity on its own parameter
    CHECK(sens.dx_dr(Sp::H2O, 0) == 1.0);
    // N2 is fixed by its own conservation row, so it cannot respond
    CHECK(std::abs(sens.dx_dr(Sp::N2, 0)) < 1e-12);

    // tangents stay inside the conserved affine subspace
    CHECK((p.cons.C * sens.dx_dr).cwiseAbs().maxCoeff() < 1e-12);

    // central re-solve differences around r = 3.0
    const double dr = 1e-4;
    const Vec xp = resolve_at(p, sol, Vec::Constant(1, 3.0 + dr));
    const Vec xm = resolve_at(p, sol, Vec::Constant(1, 3.0 - dr));
    const Vec fd = (xp - xm) / (2 * dr);
    CHECK(mixed_err(Vec(sens.dx_dr.col(0)), fd) < 1e-4);
}

TEST_CASE("the sensitivity linear system is solved to near working accuracy") {
    const NlpProblem p = golden_problem();
    const KktSolution sol = ggn_solve(p, mech().anchor);
    const SensitivityMatrix sens = kkt_sensitivities(p, sol);
    REQUIRE(sens.reliable);

    // rebuild the equilibrated system the implementation factors
    const int n = 6, mc = p.cons.n_rows(), np = 1;
    const int na = static_cast<int>(sol.active.size());
    const int mr = mc + np + na;
    const Vec F1 = eval_f1(mech(), sol.x);
    const Mat J1 = eval_j1(mech(), sol.x);
    const Mat T = residual_curvature(mech(), sol.x, F1);
    const Mat L = J1.transpose() * J1 + 0.5 * (T + T.transpose());
    Mat A = Mat::Zero(mr, n);
    A.topRows(mc) = p.cons.C;
    A(mc, Sp::H2O) = 1.0;
    for (int a = 0; a < na; ++a) A(mc + np + a, sol.active[a]) = 1.0;
    const double eta = L.cwiseAbs().maxCoeff();

    Mat K = Mat::Zero(n + mr, n + mr);
    K.topLeftCorner(n, n) = L / eta;
    K.bottomLeftCorner(mr, n) = A;
    K.topRightCorner(n, mr) = A.transpose();

    Mat rhs = Mat::Zero(n + mr, np);
    rhs(n + mc, 0) = 1.0;

    Mat W(n + mr, np);
    W.topRows(n) = sens.dx_dr;
    W.bottomRows(mr).topRows(mc + np) = -sens.dlambda_dr / eta;
    for (int a = 0; a < na; ++a)
        W.row(n + mc + np + a) = -sens.dmu_dr.row(sol.active[a]) / eta;

    CHECK((K * W - rhs).norm() < 1e-12 * rhs.norm());
}

TEST_CASE("tangent prediction is first order with a second-order remainder") {
    const NlpProblem p = golden_problem();
    const KktSolution sol = ggn_solve(p, mech().anchor);
    const SensitivityMatrix sens = kkt_sensitivities(p, sol);
    REQUIRE(sens.reliable);

    // no shift reproduces the solution, pinned entry lands on r_new exactly
    CHECK(mixed_err(tangent_predict(sol, sens, Vec::Constant(1, 3.0)), sol.x) == 0.0);
    const Vec pred = tangent_predict(sol, sens, Vec::Constant(1, 2.6));
    CHECK(pred(Sp::H2O) == 2.6);

    // halving the parameter shift shrinks the prediction error second order
    const double e1 =
        (resolve_at(p, sol, Vec::Constant(1, 3.2)) - tangent_predict(sol, sens, Vec::Constant(1, 3.2)))
            .norm();
    const double e2 =
        (resolve_at(p, sol, Vec::Constant(1, 3.1)) - tangent_predict(sol, sens, Vec::Constant(1, 3.1)))
            .norm();
    const double factor = e1 / e2;
    CHECK(factor >= 3.0);
    CHECK(factor <= 5.0);

    // directional consistency: one-sided quotients converge on the column
    const Vec col = sens.dx_dr.col(0);
    double prev_err = -1.0;
    for (double eps : {1e-3, 1e-4}) {
        const Vec q = (resolve_at(p, sol, Vec::Constant(1, 3.0 + eps)) - sol.x) / eps;
        const double err = (q - col).norm();
        if (prev_err >= 0.0) CHECK(err < prev_err * 0.5);  // at least first order
        prev_err = err;
    }
}

TEST_CASE("active bounds freeze their rows; degeneracy is flagged, not guessed") {
    NlpProblem p;
    p.mech = &mech();
    p.cons = conservation_from_anchor(mech(), mech().anchor);
    p.pins.indices = {Sp::H2O, Sp::H2};
    p.pins.values = Vec(2);
    p.pins.values << 1.0, 4.0;

    const KktSolution sol = ggn_solve(p, mech().anchor);
    REQUIRE(solve_ok(sol.status));
    REQUIRE(!sol.active.empty());

    const SensitivityMatrix sens = kkt_sensitivities(p, sol);
    if (sens.reliable) {
        for (int idx : sol.active)
            CHECK(sens.dx_dr.row(idx).cwiseAbs().maxCoeff() == 0.0);
        // pin block is the 2x2 identity
        CHECK(sens.dx_dr(Sp::H2O, 0) == 1.0);
        CHECK(sens.dx_dr(Sp::H2, 1) == 1.0);
        CHECK(sens.dx_dr(Sp::H2O, 1) == 0.0);
        CHECK(sens.dx_dr(Sp::H2, 0) == 0.0);
    }

    // manufactured weak complementarity turns the result unreliable
    KktSolution weak = sol;
    for (int idx : weak.active) weak.mu(idx) = 0.0;
    const SensitivityMatrix flagged = kkt_sensitivities(p, weak);
    CHECK_FALSE(flagged.reliable);
    CHECK(flagged.dx_dr.size() == 0);
    CHECK(flagged.pins == std::vector<int>({Sp::H2O, Sp::H2}));

    // unconverged input is a usage error
    KktSolution bad;
    bad.status = SolveStatus::failed_maxiter;
    CHECK_THROWS_AS(kkt_sensitivities(p, bad), std::invalid_argument);
}
