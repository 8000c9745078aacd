#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "simtrack/nlp.hpp"
#include "simtrack/odeint.hpp"
#include "support.hpp"

using namespace simtrack;
using namespace testsup;

namespace {

// independent reference for the equality-constrained linear least squares
// step: null-space method on min ||F1 + J1 d||^2 s.t. J2 d = -F2
Vec nullspace_clls(const Mat& J1, const Vec& F1, const Mat& J2, const Vec& F2) {
    if (J2.rows() == 0) return Mat(J1).colPivHouseholderQr().solve(Vec(-F1));
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(J2);
    const Vec dp = cod.solve(Vec(-F2));
    Eigen::FullPivLU<Mat> lu(J2);
    const Mat N = lu.kernel();
    if (N.cols() == 0) return dp;
    const Vec y = Mat(J1 * N).colPivHouseholderQr().solve(Vec(-F1 - J1 * dp));
    return dp + N * y;
}

// stationarity of the solved point measured the way the engine does: gradient
// minus constraint pullback, normalized by the gross gradient magnitude
double stationarity(const NlpProblem& p, const KktSolution& sol) {
    const Vec F1 = eval_f1(*p.mech, sol.x);
    const Mat J1 = eval_j1(*p.mech, sol.x);
    const Vec g = J1.transpose() * F1;
    Vec r = g - p.cons.C.transpose() * sol.lambda.head(p.cons.n_rows());
    for (size_t j = 0; j < p.pins.indices.size(); ++j)
        r(p.pins.indices[j]) -= sol.lambda(p.cons.n_rows() + j);
    r -= sol.mu;
    const double gross = (J1.cwiseAbs().transpose() * F1.cwiseAbs()).maxCoeff();
    return r.cwiseAbs().maxCoeff() / std::max(1.0, gross);
}

}  // namespace

TEST_CASE("assemble stacks the residuals and their jacobians") {
    NlpProblem p = golden_problem();
    const Vec x = anchor_state();
    ActiveSetState as;
    as.active = {Sp::H};
    as.mu = Vec::Zero(1);
    const Residuals res = assemble(p, x, as);

    const int mc = p.cons.n_rows();
    REQUIRE(res.F2.size() == mc + 2);
    CHECK(mixed_err(Vec(res.F2.head(mc)), Vec(p.cons.C * x - p.cons.b)) < 1e-14);
    CHECK(res.F2(mc) == x(Sp::H2O) - 3.0);
    CHECK(res.F2(mc + 1) == x(Sp::H));
    CHECK(mixed_err(Mat(res.J2.topRows(mc)), p.cons.C) == 0.0);
    CHECK(res.J2(mc, Sp::H2O) == 1.0);
    CHECK(res.J2(mc + 1, Sp::H) == 1.0);

    CHECK(mixed_err(res.F1, eval_f1(*p.mech, x)) == 0.0);
    CHECK(mixed_err(res.J1, eval_j1(*p.mech, x)) == 0.0);

    // the pin row vanishes exactly at a pinned composition
    Vec xs = reference_solution();
    const Residuals res2 = assemble(p, xs, ActiveSetState{});
    CHECK(res2.F2(mc) == 0.0);

    // at the relaxed equilibrium with no pins the stack is a zero of both parts
    NlpProblem pe;
    pe.mech = &mech();
    const Vec zeq = relax_to_equilibrium(mech(), p.cons, mech().anchor);
    pe.cons = conservation_from_anchor(mech(), zeq);
    const Residuals rese = assemble(pe, zeq, ActiveSetState{});
    const double f1_scale = eval_f1(mech(), mech().anchor).cwiseAbs().maxCoeff();
    CHECK(rese.F1.cwiseAbs().maxCoeff() < 1e-6 * f1_scale);
    CHECK(rese.F2.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("solve_clls solves the stacked step system") {
    std::mt19937 rng(41);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto randn = [&](int r, int c) {
        Mat A(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) A(i, j) = gauss(rng);
        return A;
    };

    // unconstrained identity case collapses to d = -x
    {
        Residuals res;
        res.J1 = Mat::Identity(5, 5);
        res.F1 = randn(5, 1);
        res.J2 = Mat(0, 5);
        res.F2 = Vec(0);
        auto [d, lambda] = solve_clls(res);
        CHECK(lambda.size() == 0);
        CHECK(mixed_err(d, Vec(-res.F1)) < 1e-12);
    }

    // zero residuals are a fixed point
    {
        Residuals res;
        res.J1 = randn(6, 6) + 6.0 * Mat::Identity(6, 6);
        res.F1 = Vec::Zero(6);
        res.J2 = randn(2, 6);
        res.F2 = Vec::Zero(2);
        auto [d, lambda] = solve_clls(res);
        CHECK(d.cwiseAbs().maxCoeff() < 1e-12);
    }

    for (int trial = 0; trial < 50; ++trial) {
        Residuals res;
        res.J1 = randn(6, 6) + 6.0 * Mat::Identity(6, 6);
        res.F1 = randn(6, 1);
        res.J2 = randn(2, 6);
        res.F2 = randn(2, 1);
        auto [d, lambda] = solve_clls(res);

        // KKT residual of the computed pair against the stacked system
        const Mat H = res.J1.transpose() * res.J1;
        const Vec g = res.J1.transpose() * res.F1;
        const double rhs_norm = std::max(g.norm(), res.F2.norm());
        CHECK((H * d - res.J2.transpose() * lambda + g).norm() < 1e-10 * std::max(1.0, rhs_norm));
        CHECK((res.J2 * d + res.F2).norm() < 1e-12 * std::max(1.0, rhs_norm));

        // agrees with an independent null-space solution
        CHECK(mixed_err(d, nullspace_clls(res.J1, res.F1, res.J2, res.F2)) < 1e-9);

        // Gauss-Newton descent from feasible points
        Residuals feas = res;
        feas.F2.setZero();
        auto [df, lf] = solve_clls(feas);
        CHECK((feas.F1 + feas.J1 * df).squaredNorm() <= feas.F1.squaredNorm() * (1 + 1e-12));
    }

    // a rank-deficient stack is reported, not silently solved
    Residuals sing;
    sing.J1 = Mat::Zero(3, 3);
    sing.F1 = Vec::Ones(3);
    sing.J2 = Mat::Zero(1, 3);
    sing.F2 = Vec::Zero(1);
    CHECK_THROWS_AS(solve_clls(sing), std::runtime_error);
}

TEST_CASE("ggn_solve reaches the reference composition from the anchor") {
    NlpProblem p = golden_problem();
    const KktSolution sol = ggn_solve(p, mech().anchor);
    REQUIRE(sol.status == SolveStatus::converged);

    CHECK(sol.x(Sp::H2O) == 3.0);  // pins hold bit-exactly
    const Vec ref = reference_solution();
    for (int i = 0; i < 6; ++i)
        CHECK(std::abs(sol.x(i) - ref(i)) <= 0.01 * std::abs(ref(i)));

    CHECK((p.cons.C * sol.x - p.cons.b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(stationarity(p, sol) < 1e-8);
    CHECK(sol.kkt_residual < 1e-8);
    CHECK(sol.x.minCoeff() >= 0.0);

    // restarting from the solution terminates immediately
    const KktSolution again = ggn_solve(p, sol.x);
    CHECK(again.status == SolveStatus::converged);
    CHECK(again.iterations <= 1);

    // iteration log is coherent: positivity and the filter acceptance flags
    for (const auto& rec : sol.log) {
        CHECK(rec.filter_ok);
        CHECK(rec.step > 0.0);
    }
}

TEST_CASE("filter bookkeeping: margins, pruning, non-dominance replay") {
    FilterState filter;
    filter.add(1.0, 10.0);
    // clearly better points are acceptable, clearly worse ones are not
    CHECK_FALSE(filter.dominated(0.5, 5.0));
    CHECK(filter.dominated(1.0, 10.0));
    CHECK(filter.dominated(2.0, 20.0));
    // improving either measure enough escapes domination
    CHECK_FALSE(filter.dominated(0.9, 20.0));
    CHECK_FALSE(filter.dominated(2.0, 9.0));

    // inserting a dominating pair prunes the old entry
    filter.add(0.5, 5.0);
    CHECK(filter.entries.size() == 1);

    // entries stay mutually non-dominated as admissible pairs accumulate
    // (add() expects candidates that already passed the domination test, as
    // the solver guarantees)
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (int k = 0; k < 200; ++k) {
        const double th = u(rng), ff = u(rng);
        if (!filter.dominated(th, ff)) filter.add(th, ff);
    }
    for (size_t a = 0; a < filter.entries.size(); ++a)
        for (size_t b = 0; b < filter.entries.size(); ++b) {
            if (a == b) continue;
            const bool dom = filter.entries[a].first >= filter.entries[b].first &&
                             filter.entries[a].second >= filter.entries[b].second;
            CHECK_FALSE(dom);
        }

    // replay a real solver log: every accepted pair was admissible for the
    // filter state built from the previously added pairs
    NlpProblem p = golden_problem();
    const KktSolution sol = ggn_solve(p, mech().anchor);
    FilterState replay;
    for (const auto& rec : sol.log) {
        CHECK_FALSE(replay.dominated(rec.theta, rec.f));
        if (rec.filter_added) replay.add(rec.theta, rec.f);
    }
}

TEST_CASE("soc_step is the minimum-norm linearized constraint correction") {
    // single linear row: the closed-form projection
    {
        NlpProblem p;
        p.mech = &mech();
        p.cons.C = Mat::Zero(1, 6);
        p.cons.C << 1, 2, 0, 0, 1, 0;
        p.cons.b = Vec::Constant(1, 4.0);
        p.cons.anchor = anchor_state();

        const Vec x = anchor_state();
        const Vec d = Vec::Constant(6, 0.1);
        const Residuals res = assemble(p, x, ActiveSetState{});
        const Vec dd = soc_step(p, res, d, x);

        const Vec a = p.cons.C.row(0).transpose();
        const double viol = a.dot(x + d) - 4.0;
        CHECK(mixed_err(dd, Vec(-a * viol / a.squaredNorm())) < 1e-12);
    }

    // with pins: a corrector step never moves pinned coordinates, and the
    // correction of such a step leaves them alone too while solving the
    // linearized system on the rest
    {
        NlpProblem p = golden_problem();
        const Vec x = anchor_state();
        Vec d = Vec::Constant(6, 0.05);
        d(Sp::H2O) = 0.0;
        const Residuals res = assemble(p, x, ActiveSetState{});
        const Vec dd = soc_step(p, res, d, x);
        // the pin row is satisfied by the trial step, so the correction there
        // is zero up to the factorization's roundoff
        CHECK(std::abs(dd(Sp::H2O)) < 1e-14);

        const Vec F2_trial = p.cons.C * (x + d) - p.cons.b;
        CHECK((p.cons.C * dd + F2_trial).cwiseAbs().maxCoeff() < 1e-10);

        // already-feasible trial point needs no correction
        const Vec dd0 = soc_step(p, res, Vec(Vec::Zero(6)), x);
        CHECK(dd0.cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("restore_feasibility projects back onto the constraint set") {
    NlpProblem p = golden_problem();
    FilterState filter;

    // a feasible point passes through unchanged
    const KktSolution sol = ggn_solve(p, mech().anchor);
    Vec x = sol.x;
    CHECK(mixed_err(restore_feasibility(p, x, filter), x) < 1e-12);

    // violating only the pin is repaired exactly in that coordinate; the
    // free coordinates were already optimal so they move at most by roundoff
    Vec xpin = sol.x;
    xpin(Sp::H2O) = 3.7;
    const Vec fixed = restore_feasibility(p, xpin, filter);
    CHECK(fixed(Sp::H2O) == 3.0);
    for (int i = 0; i < 6; ++i)
        if (i != Sp::H2O) CHECK(std::abs(fixed(i) - xpin(i)) < 1e-12 * std::abs(xpin(i)));

    // a random infeasible perturbation lands feasible and nearby
    std::mt19937 rng(59);
    std::normal_distribution<double> gauss(0.0, 1e-3);
    Vec noisy = sol.x;
    for (int i = 0; i < 6; ++i) noisy(i) += gauss(rng);
    const Vec back = restore_feasibility(p, noisy, filter);
    CHECK((p.cons.C * back - p.cons.b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(back(Sp::H2O) == 3.0);
    CHECK(back.minCoeff() >= 0.0);
    CHECK((back - noisy).norm() < 1e-1);
}

TEST_CASE("active bounds: activation, exact zeros, multiplier signs") {
    // this pin pair drives z_H to the boundary
    NlpProblem p;
    p.mech = &mech();
    p.cons = conservation_from_anchor(mech(), mech().anchor);
    p.pins.indices = {Sp::H2O, Sp::H2};
    p.pins.values = Vec(2);
    p.pins.values << 1.0, 4.0;

    const KktSolution sol = ggn_solve(p, mech().anchor);
    REQUIRE(solve_ok(sol.status));
    REQUIRE(!sol.active.empty());
    for (int idx : sol.active) {
        CHECK(sol.x(idx) == 0.0);
        CHECK(sol.mu(idx) > -1e-10);
    }
    CHECK(sol.x.minCoeff() >= 0.0);
    CHECK((p.cons.C * sol.x - p.cons.b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(stationarity(p, sol) < 1e-8);
}

TEST_CASE("newton corrector agrees with the gauss-newton one and contracts fast") {
    NlpProblem p = golden_problem();
    const KktSolution ggn = ggn_solve(p, mech().anchor);
    const KktSolution newton = newton_kkt_solve(p, mech().anchor, Vec::Zero(4));
    REQUIRE(solve_ok(ggn.status));
    REQUIRE(solve_ok(newton.status));
    CHECK(mixed_err(ggn.x, newton.x) < 1e-8);

    // restart at the solution: nothing to do
    const KktSolution again = newton_kkt_solve(p, newton.x, newton.lambda);
    CHECK(again.iterations <= 1);

    // tail contraction from a deliberately distant start: the last step above
    // the noise floor must shrink at least superlinearly
    Vec far = mech().anchor;
    far(Sp::O) += 0.2;
    far(Sp::OH) += 0.3;
    const Vec proj = restore_feasibility(p, far, FilterState{});
    const KktSolution tail = newton_kkt_solve(p, proj, Vec::Zero(4));
    REQUIRE(solve_ok(tail.status));
    // uninterrupted full steps above the increment noise floor
    std::vector<double> dn;
    for (const auto& rec : tail.log) {
        if (rec.step < 1.0) {
            dn.clear();
            continue;
        }
        if (rec.dnorm > 1e-13) dn.push_back(rec.dnorm);
    }
    REQUIRE(dn.size() >= 3);
    // observed order over the last triple: log-ratio estimate well above linear
    const double d0 = dn[dn.size() - 3], d1 = dn[dn.size() - 2], d2 = dn[dn.size() - 1];
    const double order = std::log(d2 / d1) / std::log(d1 / d0);
    CHECK(order >= 1.2);
}

TEST_CASE("complete_state closes compositions through the conservation rows") {
    const ConservationSystem cons = conservation_from_anchor(mech(), mech().anchor);

    // fixing O, H2, H2O at the reference solution reproduces its other entries
    const Vec ref = reference_solution();
    bool negative = false;
    const Vec z = complete_state(
        cons, {{Sp::O, ref(Sp::O)}, {Sp::H2, ref(Sp::H2)}, {Sp::H2O, ref(Sp::H2O)}}, &negative);
    CHECK_FALSE(negative);
    CHECK((z - ref).cwiseAbs().maxCoeff() < 1e-6);

    // round trip from a random feasible composition
    std::mt19937 rng(61);
    const KktSolution sol = ggn_solve(golden_problem(), mech().anchor);
    const Vec z2 = complete_state(
        cons, {{Sp::O, sol.x(Sp::O)}, {Sp::H2, sol.x(Sp::H2)}, {Sp::H2O, sol.x(Sp::H2O)}});
    CHECK(mixed_err(z2, sol.x) < 1e-12);

    // wrong number of fixed components is rejected
    CHECK_THROWS_AS(complete_state(cons, {{Sp::O, 0.3}}), std::invalid_argument);

    // forcing an impossible closure flags negativity
    bool neg2 = false;
    complete_state(cons, {{Sp::O, 4.0}, {Sp::H2, 6.0}, {Sp::H2O, 0.5}}, &neg2);
    CHECK(neg2);
}

TEST_CASE("landscape scan completes states and reports validity") {
    const ConservationSystem cons = conservation_from_anchor(mech(), mech().anchor);
    std::vector<double> grid;
    for (double v = 2.0; v <= 6.001; v += 0.05) grid.push_back(v);
    const auto rows = landscape_scan(mech(), cons, {{Sp::H2, 2.0}, {Sp::O, 0.3}}, {Sp::H2O},
                                     {grid});
    REQUIRE(rows.size() == grid.size());
    int minima = 0;
    for (size_t k = 0; k < rows.size(); ++k) {
        CHECK(rows[k].coords[0] == grid[k]);
        CHECK(rows[k].phi >= 0.0);
        CHECK(rows[k].valid == (rows[k].z.minCoeff() >= 0.0));
        CHECK(rows[k].phi ==
              doctest::Approx(objective_phi(mech(), rows[k].z)).epsilon(1e-12));
        if (k > 0 && k + 1 < rows.size() && rows[k].phi < rows[k - 1].phi &&
            rows[k].phi < rows[k + 1].phi)
            ++minima;
    }
    CHECK(minima == 2);
}
