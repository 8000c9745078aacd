#include "simtrack/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>

#include "simtrack/linalg.hpp"
#include "simtrack/log.hpp"

namespace simtrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// line-search envelope constants (Waechter-Biegler style filter defaults)
constexpr double kSwitchSF = 2.3;
constexpr double kSwitchSTheta = 1.1;
constexpr double kSwitchDelta = 1.0;
constexpr double kArmijoEta = 1e-4;

}  // namespace

const char* status_to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::restoration_used: return "restoration_used";
        case SolveStatus::failed_singular: return "failed_singular";
        case SolveStatus::failed_maxiter: return "failed_maxiter";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// filter

bool FilterState::dominated(double theta, double f) const {
    for (const auto& [te, fe] : entries) {
        const bool theta_part =
            theta >= (1.0 - gamma_theta) * te || (theta < theta_tiny && te < theta_tiny);
        if (theta_part && f >= fe - gamma_f * te) return true;
    }
    return false;
}

void FilterState::add(double theta, double f) {
    const double te = (1.0 - gamma_theta) * theta;
    const double fe = f - gamma_f * theta;
    // drop entries dominated by the new one
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [&](const std::pair<double, double>& e) {
                                     return e.first >= te && e.second >= fe;
                                 }),
                  entries.end());
    entries.emplace_back(te, fe);
}

// ---------------------------------------------------------------------------
// reduced problem view (pins substituted out)

namespace {

struct Reduced {
    int n = 0, nf = 0, mc = 0;
    std::vector<int> free;  // non-pinned species, ascending
    std::vector<int> rpos;  // species index -> position in free, or -1
    Mat C;                  // conservation rows over free columns
    Vec b;
};

Reduced make_reduced(const NlpProblem& p) {
    if (!p.mech) throw std::invalid_argument("NlpProblem: missing mechanism");
    Reduced R;
    R.n = p.mech->n_species();
    R.mc = static_cast<int>(p.cons.C.rows());
    if (p.cons.C.cols() != 0 && p.cons.C.cols() != R.n)
        throw std::invalid_argument("NlpProblem: conservation column count mismatch");

    const auto& pins = p.pins;
    if (pins.values.size() != static_cast<Eigen::Index>(pins.indices.size()))
        throw std::invalid_argument("ProgressVariableSpec: index/value size mismatch");
    std::set<int> pinned;
    for (size_t j = 0; j < pins.indices.size(); ++j) {
        int i = pins.indices[j];
        if (i < 0 || i >= R.n)
            throw std::invalid_argument("ProgressVariableSpec: species index out of range");
        if (!pinned.insert(i).second)
            throw std::invalid_argument("ProgressVariableSpec: duplicate pinned species");
        if (pins.values[j] < 0)
            throw std::invalid_argument("ProgressVariableSpec: negative pin value");
    }
    if (static_cast<int>(pins.indices.size()) >= R.n - R.mc)
        throw std::invalid_argument("ProgressVariableSpec: too many pins for the "
                                    "conserved degrees of freedom");

    R.rpos.assign(R.n, -1);
    for (int i = 0; i < R.n; ++i)
        if (!pinned.count(i)) {
            R.rpos[i] = static_cast<int>(R.free.size());
            R.free.push_back(i);
        }
    R.nf = static_cast<int>(R.free.size());

    R.C.resize(R.mc, R.nf);
    for (int j = 0; j < R.nf; ++j) R.C.col(j) = p.cons.C.col(R.free[j]);
    // eliminating the pinned variables moves their contribution to the rhs
    R.b = p.cons.b;
    if (R.mc > 0)
        for (size_t j = 0; j < pins.indices.size(); ++j)
            R.b -= p.cons.C.col(pins.indices[j]) * pins.values[j];

    // combined pin + conservation rank: pins are unit rows on distinct
    // pinned columns, so the stack has full row rank iff the reduced
    // conservation block does
    if (R.mc > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(R.C.transpose());
        if (qr.rank() < R.mc)
            throw std::invalid_argument("NlpProblem: pin + conservation rows are rank deficient");
    }
    return R;
}

Vec pick(const Reduced& R, const Vec& x) {
    Vec y(R.nf);
    for (int j = 0; j < R.nf; ++j) y[j] = x[R.free[j]];
    return y;
}

// constraint residual [C x - b; x_active] at a full state
Vec constraint_residual(const Reduced& R, const std::vector<int>& active, const Vec& x) {
    Vec F2(R.mc + static_cast<int>(active.size()));
    if (R.mc > 0) F2.head(R.mc) = R.C * pick(R, x) - R.b;
    for (size_t a = 0; a < active.size(); ++a) F2[R.mc + static_cast<int>(a)] = x[active[a]];
    return F2;
}

// equilibrated saddle-point solve:
//   [H, A'; A, 0][d; -lambda] = [-g; -F2]
// factored as D K D with D = diag(eta^-1/2 I, eta^1/2 I), eta = max|H|,
// which leaves the inertia unchanged and keeps the condition estimate
// meaningful for the geometry instead of the block scales.
struct KktOut {
    Vec d, lambda;
    bool singular = false;
    int n_pos = 0, n_neg = 0;
};

KktOut kkt_solve(const Mat& H, const Mat& A, const Vec& g, const Vec& F2, double cond_max) {
    const int nf = static_cast<int>(H.rows());
    const int mr = static_cast<int>(A.rows());
    const double eta = std::max(H.cwiseAbs().maxCoeff(), 1e-300);

    Mat K = Mat::Zero(nf + mr, nf + mr);
    K.topLeftCorner(nf, nf) = H / eta;
    if (mr > 0) {
        K.bottomLeftCorner(mr, nf) = A;
        K.topRightCorner(nf, mr) = A.transpose();
    }
    KktOut out;
    SymSolver S(K);
    if (S.near_singular(cond_max)) {
        out.singular = true;
        return out;
    }
    Vec rhs(nf + mr);
    rhs.head(nf) = -g / eta;
    rhs.tail(mr) = -F2;
    Vec sol = S.solve(rhs);
    // one refinement pass: the multiplier accuracy sets the floor of the
    // stationarity measure, and the raw solve leaves it near the tolerance
    const Vec corr = S.solve(Vec(K * sol - rhs));
    if (corr.allFinite()) sol -= corr;
    out.d = sol.head(nf);
    out.lambda = -eta * sol.tail(mr);
    out.n_pos = S.n_pos();
    out.n_neg = S.n_neg();
    return out;
}

// minimum-norm solution of A dd = rhs; empty when A is row-rank deficient
std::optional<Vec> min_norm_solve(const Mat& A, const Vec& rhs) {
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
    if (cod.rank() < A.rows()) return std::nullopt;
    return cod.solve(rhs);
}

}  // namespace

// ---------------------------------------------------------------------------
// public building blocks

Residuals assemble(const NlpProblem& p, const Vec& x, const ActiveSetState& active) {
    const Mechanism& m = *p.mech;
    const int n = m.n_species();
    if (x.size() != n) throw std::invalid_argument("assemble: state size mismatch");
    if (!x.allFinite()) throw std::invalid_argument("assemble: non-finite state");

    Residuals res;
    res.F1 = eval_f1(m, x);
    res.J1 = eval_j1(m, x);

    const int mc = static_cast<int>(p.cons.C.rows());
    const int np = static_cast<int>(p.pins.indices.size());
    const int na = static_cast<int>(active.active.size());
    res.F2.resize(mc + np + na);
    res.J2 = Mat::Zero(mc + np + na, n);
    if (mc > 0) {
        res.F2.head(mc) = p.cons.C * x - p.cons.b;
        res.J2.topRows(mc) = p.cons.C;
    }
    for (int j = 0; j < np; ++j) {
        res.F2[mc + j] = x[p.pins.indices[j]] - p.pins.values[j];
        res.J2(mc + j, p.pins.indices[j]) = 1.0;
    }
    for (int a = 0; a < na; ++a) {
        res.F2[mc + np + a] = x[active.active[a]];
        res.J2(mc + np + a, active.active[a]) = 1.0;
    }
    return res;
}

std::pair<Vec, Vec> solve_clls(const Residuals& res) {
    const Mat H = res.J1.transpose() * res.J1;
    const Vec g = res.J1.transpose() * res.F1;
    KktOut out = kkt_solve(H, res.J2, g, res.F2, 1e14);
    if (out.singular)
        throw std::runtime_error("solve_clls: KKT matrix singular or near singular");
    return {out.d, out.lambda};
}

Vec soc_step(const NlpProblem& p, const Residuals& res_at_x, const Vec& d, const Vec& x) {
    // constraints are affine here, so F2(x + d) = F2(x) + J2 d
    const Vec F2_trial = res_at_x.F2 + res_at_x.J2 * d;
    auto dd = min_norm_solve(res_at_x.J2, -F2_trial);
    if (!dd) return Vec::Zero(x.size());  // rank-deficient J2: skip
    return *dd;
}

// ---------------------------------------------------------------------------
// feasibility restoration: min 0.5||xbar - x||^2 s.t. F2(xbar) = 0, xbar >= 0.
// The constraint rows are affine, so a single minimum-norm projection is the
// exact Gauss-Newton solution; bound violations are handled by activating the
// offending component at zero and re-projecting.

namespace {

std::pair<Vec, std::vector<int>> project_feasible(const Reduced& R, const NlpProblem& p,
                                                  std::vector<int> act, Vec x) {
    for (size_t j = 0; j < p.pins.indices.size(); ++j) x[p.pins.indices[j]] = p.pins.values[j];
    for (int pass = 0; pass <= R.nf; ++pass) {
        const int na = static_cast<int>(act.size());
        Mat A(R.mc + na, R.nf);
        if (R.mc > 0) A.topRows(R.mc) = R.C;
        A.bottomRows(na).setZero();
        for (int a = 0; a < na; ++a) A(R.mc + a, R.rpos[act[a]]) = 1.0;
        const Vec F2 = constraint_residual(R, act, x);
        auto dd = min_norm_solve(A, -F2);
        if (!dd) break;  // degenerate row set; keep the best point so far
        for (int j = 0; j < R.nf; ++j) x[R.free[j]] += (*dd)[j];

        int worst = -1;
        for (int j = 0; j < R.nf; ++j) {
            const int i = R.free[j];
            if (x[i] < 0 && std::find(act.begin(), act.end(), i) == act.end()) {
                worst = i;  // lowest species index wins (ascending scan)
                break;
            }
        }
        if (worst < 0) break;
        x[worst] = 0.0;
        act.insert(std::lower_bound(act.begin(), act.end(), worst), worst);
    }
    for (int i = 0; i < R.n; ++i)
        if (x[i] < 0) x[i] = 0.0;
    return {x, act};
}

}  // namespace

Vec restore_feasibility(const NlpProblem& p, const Vec& x, const FilterState& filter) {
    const Reduced R = make_reduced(p);
    auto [xr, act] = project_feasible(R, p, {}, x);
    const Vec F2 = constraint_residual(R, act, xr);
    if (F2.size() > 0 && F2.cwiseAbs().maxCoeff() > 1e-8)
        throw std::runtime_error("restore_feasibility: projection did not reach feasibility");
    const double theta = F2.lpNorm<1>();
    const double f = 0.5 * eval_f1(*p.mech, xr).squaredNorm();
    if (filter.dominated(theta, f))
        throw std::runtime_error("restore_feasibility: restored point rejected by the filter");
    return xr;
}

// ---------------------------------------------------------------------------
// the corrector engine (shared by the GGN and Newton-KKT entry points)

namespace {

struct EvalPoint {
    Vec F1;
    Vec F2;
    double f = 0, theta = 0, feas = 0;
};

EvalPoint eval_cheap(const Mechanism& m, const Reduced& R, const std::vector<int>& active,
                     const Vec& x) {
    EvalPoint e;
    if (x.sum() <= 0.0 || !x.allFinite()) {
        e.f = e.theta = e.feas = kInf;
        return e;
    }
    e.F1 = eval_f1(m, x);
    e.F2 = constraint_residual(R, active, x);
    e.f = 0.5 * e.F1.squaredNorm();
    e.theta = e.F2.size() ? e.F2.lpNorm<1>() : 0.0;
    e.feas = e.F2.size() ? e.F2.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(e.f)) e.f = kInf;
    return e;
}

KktSolution solve_engine(const NlpProblem& p, const Vec& x0, const ActiveSetState& as0,
                         const SolverConfig& cfg, bool newton) {
    const Mechanism& m = *p.mech;
    const Reduced R = make_reduced(p);
    const int n = R.n, nf = R.nf, mc = R.mc;

    Vec x = x0;
    if (x.size() != n) throw std::invalid_argument("solver: state size mismatch");
    for (int i = 0; i < n; ++i)
        if (x[i] < 0) x[i] = 0.0;
    for (size_t j = 0; j < p.pins.indices.size(); ++j) x[p.pins.indices[j]] = p.pins.values[j];
    if (x.sum() <= 0.0) throw std::domain_error("solver: nonpositive total mole number");

    std::vector<int> active;
    for (int i : as0.active)
        if (R.rpos[i] >= 0) {
            active.insert(std::lower_bound(active.begin(), active.end(), i), i);
            x[i] = 0.0;
        }

    // optional diagonal variable scaling by anchor magnitudes
    Vec s = Vec::Ones(nf);
    if (cfg.scale && p.cons.anchor.size() == n)
        for (int j = 0; j < nf; ++j) s[j] = std::max(std::abs(p.cons.anchor[R.free[j]]), 1e-6);

    FilterState filter;
    filter.gamma_theta = cfg.gamma_theta;
    filter.gamma_f = cfg.gamma_f;
    filter.theta_tiny = 0.01 * cfg.tol_feas;
    double theta_min = 0, theta_max = 0;
    bool filter_init = false;

    KktSolution sol;
    sol.x = x;
    bool used_restoration = false;
    std::vector<double> moves;

    Vec F1, g;
    Mat J1r;
    double gross = 0;
    Vec lambda_red;

    auto finalize = [&](SolveStatus status, double feas_now) {
        sol.status = status;
        sol.x = x;
        // full-space multipliers: conservation from the solve, pins recovered
        // from the stationarity rows of the pinned variables
        const int np = static_cast<int>(p.pins.indices.size());
        sol.lambda = Vec::Zero(mc + np);
        sol.mu = Vec::Zero(n);
        double stat_rel = kInf;
        if (lambda_red.size() == mc + static_cast<int>(active.size())) {
            sol.lambda.head(mc) = lambda_red.head(mc);
            for (size_t a = 0; a < active.size(); ++a)
                sol.mu[active[a]] = lambda_red[mc + static_cast<int>(a)];
            const Vec F1_full = eval_f1(m, x);
            const Mat J1_full = eval_j1(m, x);
            const Vec grad = J1_full.transpose() * F1_full;
            Vec resid = grad;
            if (mc > 0) resid -= p.cons.C.transpose() * sol.lambda.head(mc);
            for (int i = 0; i < n; ++i) resid[i] -= sol.mu[i];
            for (int j = 0; j < np; ++j) {
                sol.lambda[mc + j] = resid[p.pins.indices[j]];
                resid[p.pins.indices[j]] = 0.0;
            }
            const double gr =
                std::max(1.0, (J1_full.cwiseAbs().transpose() * F1_full.cwiseAbs()).maxCoeff());
            stat_rel = resid.cwiseAbs().maxCoeff() / gr;
        }
        sol.active = active;
        sol.kkt_residual = std::max(feas_now, stat_rel);
        sol.a0 = moves.size() > 0 ? moves[0] : 0.0;
        sol.a1 = moves.size() > 1 ? moves[1] : 0.0;
        return sol;
    };

    for (;;) {
        // evaluate the current iterate
        EvalPoint ev = eval_cheap(m, R, active, x);
        if (!std::isfinite(ev.f)) throw std::domain_error("solver: objective not finite");
        F1 = ev.F1;
        const Mat J1 = eval_j1(m, x);
        J1r.resize(n, nf);
        for (int j = 0; j < nf; ++j) J1r.col(j) = J1.col(R.free[j]);
        g = J1r.transpose() * F1;
        gross = (J1r.cwiseAbs().transpose() * F1.cwiseAbs()).maxCoeff();

        if (!filter_init) {
            theta_min = 1e-4 * std::max(1.0, ev.theta);
            theta_max = 1e4 * std::max(1.0, ev.theta);
            filter.entries.clear();
            filter.entries.emplace_back(theta_max, -kInf);
            filter_init = true;
        }

        Mat H = J1r.transpose() * J1r;
        bool newton_matrix = newton;
        if (newton) {
            const Mat T = residual_curvature(m, x, F1);
            Mat Tr(nf, nf);
            for (int j = 0; j < nf; ++j)
                for (int k = 0; k < nf; ++k) Tr(j, k) = T(R.free[j], R.free[k]);
            H += 0.5 * (Tr + Tr.transpose());
        }

        // solve on the current active set; immediately activate bounds that
        // block the step at a component already sitting at zero
        KktOut kk;
        Vec d;
        for (int pass = 0;; ++pass) {
            const int na = static_cast<int>(active.size());
            Mat A(mc + na, nf);
            if (mc > 0) A.topRows(mc) = R.C;
            A.bottomRows(na).setZero();
            for (int a = 0; a < na; ++a) A(mc + a, R.rpos[active[a]]) = 1.0;
            const Vec F2 = constraint_residual(R, active, x);

            Mat Hs = H, As = A;
            Vec gs = g;
            if (cfg.scale) {
                Hs = s.asDiagonal() * H * s.asDiagonal();
                As = A * s.asDiagonal();
                gs = s.cwiseProduct(g);
            }
            kk = kkt_solve(Hs, As, gs, F2, cfg.cond_max);
            if (kk.singular && newton_matrix) {
                // wrong curvature or breakdown: retry with the GGN matrix
                H = J1r.transpose() * J1r;
                newton_matrix = false;
                continue;
            }
            if (kk.singular) return finalize(SolveStatus::failed_singular, ev.feas);
            if (newton_matrix && (kk.n_pos != nf || kk.n_neg != mc + na)) {
                H = J1r.transpose() * J1r;
                newton_matrix = false;
                continue;
            }
            d = cfg.scale ? Vec(s.cwiseProduct(kk.d)) : kk.d;

            // zero-component blocker: activate and re-solve
            int blocker0 = -1;
            for (int j = 0; j < nf; ++j) {
                const int i = R.free[j];
                if (x[i] == 0.0 && d[j] < 0 &&
                    std::find(active.begin(), active.end(), i) == active.end()) {
                    blocker0 = i;
                    break;
                }
            }
            if (blocker0 < 0 || pass >= nf) break;
            active.insert(std::lower_bound(active.begin(), active.end(), blocker0), blocker0);
        }
        lambda_red = kk.lambda;

        const double dn = d.cwiseAbs().maxCoeff();
        const double xn = x.cwiseAbs().maxCoeff();
        Vec stat_vec = g;
        if (mc > 0) stat_vec -= R.C.transpose() * lambda_red.head(mc);
        for (size_t a = 0; a < active.size(); ++a)
            stat_vec[R.rpos[active[a]]] -= lambda_red[mc + static_cast<int>(a)];
        const double stat = stat_vec.cwiseAbs().maxCoeff();
        const bool d_small = dn < cfg.tol_abs || dn < cfg.tol_rel * xn;
        const bool stat_ok = stat <= cfg.tol_stat * std::max(1.0, gross);

        SIMTRACK_LOG(LogLevel::Debug, "iter " << sol.iterations << " theta=" << ev.theta
                                              << " f=" << ev.f << " |d|=" << dn
                                              << " stat=" << stat / std::max(1.0, gross)
                                              << " act=" << active.size());

        if (d_small && ev.feas < cfg.tol_feas) {
            if (stat_ok) {
                // candidate solution; release a bound with negative multiplier
                int drop = -1;
                for (size_t a = 0; a < active.size(); ++a)
                    if (lambda_red[mc + static_cast<int>(a)] < cfg.mu_drop) {
                        drop = active[a];
                        break;
                    }
                if (drop < 0)
                    return finalize(used_restoration ? SolveStatus::restoration_used
                                                     : SolveStatus::converged,
                                    ev.feas);
                active.erase(std::find(active.begin(), active.end(), drop));
                IterationRecord rec;
                rec.iter = ++sol.iterations;
                rec.theta = ev.theta;
                rec.f = ev.f;
                rec.dnorm = dn;
                rec.step = 0.0;
                rec.active = active;
                sol.log.push_back(rec);
                if (sol.iterations >= cfg.max_iter)
                    return finalize(SolveStatus::failed_maxiter, ev.feas);
                continue;
            }
            // sub-tolerance polish: the increment is below the resolution at
            // which the filter and Armijo tests can distinguish points, so
            // take the full step to sharpen the multipliers
            for (int j = 0; j < nf; ++j) x[R.free[j]] += d[j];
            for (int i = 0; i < n; ++i)
                if (x[i] < 0) x[i] = 0.0;
            moves.push_back(dn);
            IterationRecord rec;
            rec.iter = ++sol.iterations;
            EvalPoint ep = eval_cheap(m, R, active, x);
            rec.theta = ep.theta;
            rec.f = ep.f;
            rec.dnorm = dn;
            rec.step = 1.0;
            rec.active = active;
            sol.log.push_back(rec);
            if (sol.iterations >= cfg.max_iter)
                return finalize(SolveStatus::failed_maxiter, ev.feas);
            continue;
        }
        if (sol.iterations >= cfg.max_iter) return finalize(SolveStatus::failed_maxiter, ev.feas);

        // ratio test: truncate the step at the first bound it would cross
        double sigma = 1.0;
        int blocker = -1;
        for (int j = 0; j < nf; ++j) {
            const int i = R.free[j];
            if (d[j] < 0 && x[i] + d[j] < 0 &&
                std::find(active.begin(), active.end(), i) == active.end()) {
                const double sj = x[i] / (-d[j]);
                if (sj < sigma) {
                    sigma = sj;
                    blocker = i;
                }
            }
        }
        if (blocker >= 0) d *= sigma;
        const double dn_trunc = d.cwiseAbs().maxCoeff();

        const double theta_k = ev.theta, f_k = ev.f;
        const double dfTd = g.dot(d);

        auto trial_point = [&](double t) {
            Vec xt = x;
            for (int j = 0; j < nf; ++j) xt[R.free[j]] += t * d[j];
            if (t == 1.0 && blocker >= 0) xt[blocker] = 0.0;
            for (int i = 0; i < n; ++i)
                if (xt[i] < 0) xt[i] = 0.0;
            return xt;
        };
        const bool sw_base = theta_k <= theta_min && dfTd < 0;
        auto switching = [&](double t) {
            return sw_base &&
                   t * std::pow(-dfTd, kSwitchSF) > kSwitchDelta * std::pow(theta_k, kSwitchSTheta);
        };

        double t = 1.0;
        bool accepted = false, soc_used = false, f_type = false, filter_ok = true;
        Vec x_new;
        EvalPoint trial;
        int soc_left = cfg.max_soc;
        while (t >= cfg.t_min) {
            Vec xt = trial_point(t);
            trial = eval_cheap(m, R, active, xt);
            bool reject;
            if (!std::isfinite(trial.f) || !std::isfinite(trial.theta)) {
                reject = true;
            } else if (filter.dominated(trial.theta, trial.f)) {
                reject = true;
            } else if (switching(t)) {
                if (trial.f <= f_k + kArmijoEta * t * dfTd) {
                    accepted = true;
                    f_type = true;
                    x_new = xt;
                    break;
                }
                reject = true;
            } else if (trial.theta < (1.0 - cfg.gamma_theta) * theta_k ||
                       trial.f < f_k - cfg.gamma_f * theta_k) {
                accepted = true;
                x_new = xt;
                break;
            } else {
                reject = true;
            }

            // one second-order correction, attempted at the first rejection
            if (reject && t == 1.0 && soc_left > 0 && std::isfinite(trial.theta) &&
                trial.theta >= theta_k && trial.theta >= 0.01 * cfg.tol_feas) {
                --soc_left;
                const int na = static_cast<int>(active.size());
                Mat A(mc + na, nf);
                if (mc > 0) A.topRows(mc) = R.C;
                A.bottomRows(na).setZero();
                for (int a = 0; a < na; ++a) A(mc + a, R.rpos[active[a]]) = 1.0;
                auto dd = min_norm_solve(A, -constraint_residual(R, active, xt));
                if (dd) {
                    Vec xs = xt;
                    for (int j = 0; j < nf; ++j) xs[R.free[j]] += (*dd)[j];
                    for (int i = 0; i < n; ++i)
                        if (xs[i] < 0) xs[i] = 0.0;
                    EvalPoint es = eval_cheap(m, R, active, xs);
                    if (std::isfinite(es.f) && !filter.dominated(es.theta, es.f)) {
                        const bool sw1 = switching(1.0);
                        const bool arm = es.f <= f_k + kArmijoEta * dfTd;
                        const bool bi = es.theta < (1.0 - cfg.gamma_theta) * theta_k ||
                                        es.f < f_k - cfg.gamma_f * theta_k;
                        if ((sw1 && arm) || (!sw1 && bi)) {
                            accepted = true;
                            soc_used = true;
                            f_type = sw1 && arm;
                            x_new = xs;
                            trial = es;
                            break;
                        }
                    }
                }
            }
            t *= cfg.backtrack;
        }

        bool filter_add = false;
        if (accepted && !f_type) {
            filter.add(theta_k, f_k);
            filter_add = true;
        }

        if (!accepted) {
            // line search exhausted: restore feasibility near x
            filter.add(theta_k, f_k);
            auto [xr, act_r] = project_feasible(R, p, active, x);
            EvalPoint er = eval_cheap(m, R, act_r, xr);
            if (!std::isfinite(er.f) || filter.dominated(er.theta, er.f) ||
                er.feas > 10 * cfg.tol_feas)
                return finalize(SolveStatus::failed_maxiter, ev.feas);
            moves.push_back((xr - x).cwiseAbs().maxCoeff());
            x = xr;
            active = act_r;
            used_restoration = true;
            IterationRecord rec;
            rec.iter = ++sol.iterations;
            rec.theta = er.theta;
            rec.f = er.f;
            rec.dnorm = dn_trunc;
            rec.step = 0.0;
            rec.active = active;
            rec.restored = true;
            rec.filter_added = true;
            sol.log.push_back(rec);
            if (sol.iterations >= cfg.max_iter)
                return finalize(SolveStatus::failed_maxiter, er.feas);
            continue;
        }

        moves.push_back((x_new - x).cwiseAbs().maxCoeff());
        x = x_new;
        // bounds reached exactly become active
        for (int j = 0; j < nf; ++j) {
            const int i = R.free[j];
            if (x[i] == 0.0 && std::find(active.begin(), active.end(), i) == active.end())
                active.insert(std::lower_bound(active.begin(), active.end(), i), i);
        }
        IterationRecord rec;
        rec.iter = ++sol.iterations;
        rec.theta = trial.theta;
        rec.f = trial.f;
        rec.dnorm = dn_trunc;
        rec.step = soc_used ? 1.0 : t;
        rec.active = active;
        rec.soc = soc_used;
        rec.f_type = f_type;
        rec.filter_added = filter_add;
        rec.filter_ok = filter_ok;
        sol.log.push_back(rec);
        if (sol.iterations >= cfg.max_iter) {
            EvalPoint ef = eval_cheap(m, R, active, x);
            return finalize(SolveStatus::failed_maxiter, ef.feas);
        }
    }
}

}  // namespace

KktSolution ggn_solve(const NlpProblem& p, const Vec& x0, const SolverConfig& cfg) {
    return solve_engine(p, x0, {}, cfg, false);
}

KktSolution ggn_solve(const NlpProblem& p, const Vec& x0, const ActiveSetState& active0,
                      const SolverConfig& cfg) {
    return solve_engine(p, x0, active0, cfg, false);
}

KktSolution newton_kkt_solve(const NlpProblem& p, const Vec& x0, const Vec& lambda0,
                             const SolverConfig& cfg) {
    (void)lambda0;  // constraints are affine: the Hessian has no multiplier term
    return solve_engine(p, x0, {}, cfg, true);
}

KktSolution newton_kkt_solve(const NlpProblem& p, const Vec& x0, const Vec& lambda0,
                             const ActiveSetState& active0, const SolverConfig& cfg) {
    (void)lambda0;
    return solve_engine(p, x0, active0, cfg, true);
}

// ---------------------------------------------------------------------------
// state completion and landscape scans

Vec complete_state(const ConservationSystem& cons, const std::vector<std::pair<int, double>>& fixed,
                   bool* negative) {
    const int n = static_cast<int>(cons.C.cols());
    const int mc = static_cast<int>(cons.C.rows());
    Eigen::ColPivHouseholderQR<Mat> qr_rank(cons.C);
    const int rank = static_cast<int>(qr_rank.rank());
    if (static_cast<int>(fixed.size()) != n - rank)
        throw std::invalid_argument("complete_state: need exactly n - rank(C) fixed components");

    std::vector<bool> is_fixed(n, false);
    Vec z = Vec::Zero(n);
    for (const auto& [i, v] : fixed) {
        if (i < 0 || i >= n || is_fixed[i])
            throw std::invalid_argument("complete_state: bad fixed component");
        is_fixed[i] = true;
        z[i] = v;
    }
    std::vector<int> free;
    for (int i = 0; i < n; ++i)
        if (!is_fixed[i]) free.push_back(i);

    Mat Cf(mc, static_cast<int>(free.size()));
    for (size_t j = 0; j < free.size(); ++j) Cf.col(static_cast<int>(j)) = cons.C.col(free[j]);
    Vec rhs = cons.b;
    for (const auto& [i, v] : fixed) rhs -= cons.C.col(i) * v;

    Eigen::ColPivHouseholderQR<Mat> qr(Cf);
    if (qr.rank() < static_cast<int>(free.size()))
        throw std::invalid_argument("complete_state: induced system is singular");
    const Vec zf = qr.solve(rhs);
    if ((Cf * zf - rhs).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("complete_state: induced system is inconsistent");
    for (size_t j = 0; j < free.size(); ++j) z[free[j]] = zf[static_cast<int>(j)];

    if (negative) *negative = z.minCoeff() < 0.0;
    return z;
}

std::vector<LandscapeRow> landscape_scan(const Mechanism& m, const ConservationSystem& cons,
                                         const std::vector<std::pair<int, double>>& fixed,
                                         const std::vector<int>& scan_indices,
                                         const std::vector<std::vector<double>>& scan_values) {
    if (scan_indices.size() != scan_values.size())
        throw std::invalid_argument("landscape_scan: axis/value mismatch");
    const size_t n_axes = scan_indices.size();
    size_t total = 1;
    for (const auto& v : scan_values) {
        if (v.empty()) throw std::invalid_argument("landscape_scan: empty scan axis");
        total *= v.size();
    }

    std::vector<LandscapeRow> rows;
    rows.reserve(total);
    std::vector<size_t> idx(n_axes, 0);
    for (size_t flat = 0; flat < total; ++flat) {
        auto fx = fixed;
        LandscapeRow row;
        row.coords.resize(n_axes);
        for (size_t a = 0; a < n_axes; ++a) {
            row.coords[a] = scan_values[a][idx[a]];
            fx.emplace_back(scan_indices[a], row.coords[a]);
        }
        bool neg = false;
        row.z = complete_state(cons, fx, &neg);
        row.valid = !neg;
        // the objective is rational in z and well defined at negative
        // completions; evaluate it everywhere so minima outside the physical
        // region are still visible
        row.phi = objective_phi(m, row.z);
        rows.push_back(std::move(row));

        for (size_t a = n_axes; a-- > 0;) {
            if (++idx[a] < scan_values[a].size()) break;
            idx[a] = 0;
        }
    }
    return rows;
}

}  // namespace simtrack
