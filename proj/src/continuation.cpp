#include "simtrack/continuation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "simtrack/log.hpp"

namespace simtrack {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Bail out of a segment after this many rejected corrector attempts; keeps
// unreachable targets (infeasible pin combinations) from burning time on
// ever-finer bisection.
constexpr int kMaxFailedAttempts = 40;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Prediction constant_predict(const PathPoint& prev) {
    return {prev.solution.x, prev.solution.lambda, prev.solution.active};
}

KktSolution run_corrector(const NlpProblem& p, const Prediction& pred,
                          const ContinuationConfig& cfg) {
    ActiveSetState as;
    as.active = pred.active;
    if (cfg.corrector == CorrectorKind::newton_kkt)
        return newton_kkt_solve(p, pred.x, pred.lambda, as, cfg.solver);
    return ggn_solve(p, pred.x, as, cfg.solver);
}

PathPoint make_path_point(const NlpProblem& p, const Vec& r, KktSolution sol) {
    PathPoint pp;
    pp.r = r;
    pp.corrector_stats = {sol.iterations, sol.a0, sol.a1};
    pp.solution = std::move(sol);
    SensitivityMatrix sens = kkt_sensitivities(p, pp.solution);
    if (sens.reliable) pp.sens = std::move(sens);
    return pp;
}

}  // namespace

Prediction euler_predict(const PathPoint& prev, const Vec& r_next, double h) {
    if (h < 0.0 || h > 1.0) throw std::invalid_argument("euler_predict: h outside [0, 1]");
    if (r_next.size() != prev.r.size())
        throw std::invalid_argument("euler_predict: parameter dimension mismatch");
    Prediction pred = constant_predict(prev);
    if (!prev.sens || !prev.sens->reliable) return pred;  // constant fallback
    const Vec dr = h * (r_next - prev.r);
    pred.x = (prev.solution.x + prev.sens->dx_dr * dr).cwiseMax(0.0);
    pred.lambda = prev.solution.lambda + prev.sens->dlambda_dr * dr;
    return pred;
}

double adapt_step(const StepSizeState& state, const CorrectorStats& stats) {
    const double h = std::clamp(state.h, state.h_min, state.h_max);
    const double kdes = std::max(2, state.k_desired);
    double h_new;
    if (stats.m < 2 || stats.a0 <= 0.0) {
        h_new = state.growth * h;
    } else {
        // The corrector reached tol from eps0 = a0 in m iterations.  Predicted
        // count from a different eps0 follows the contraction model anchored at
        // that observation, so eps0_max is the starting error whose predicted
        // count equals k_desired.  Anchoring cancels tol from both formulas.
        const double dk = static_cast<double>(stats.m) - kdes;
        double eps0_max = std::numeric_limits<double>::infinity();
        if (state.model == StepModel::linear) {
            // eps_{j+1} <= rho eps_j: count(eps0) = m + log(eps0/a0)/log(1/rho)
            const double rho = std::clamp(stats.a1 / stats.a0, 1e-12, 0.99);
            eps0_max = stats.a0 * std::pow(rho, dk);
        } else {
            // eps_{j+1} <= delta eps_j^2: delta eps_j = (delta eps0)^(2^j)
            const double delta = stats.a1 / (stats.a0 * stats.a0);
            if (delta > 0.0) {
                const double da0 = std::min(delta * stats.a0, 0.99);
                eps0_max = std::pow(da0, std::exp2(dk)) / delta;
            }
        }
        // predictor error model eps0(h) = gamma h^2 inverted for the new h
        h_new = h * std::sqrt(eps0_max / stats.a0);
        if (!std::isfinite(h_new)) h_new = state.growth * h;
    }
    h_new = std::min(h_new, state.growth * h);
    return std::clamp(h_new, state.h_min, state.h_max);
}

ContinueResult continue_to(const PathPoint& prev, const Vec& r_target, const NlpProblem& base,
                           const ContinuationConfig& cfg) {
    if (!solve_ok(prev.solution.status))
        throw std::invalid_argument("continue_to: starting point is not converged");
    if (prev.r.size() != r_target.size())
        throw std::invalid_argument("continue_to: parameter dimension mismatch");
    if (static_cast<Eigen::Index>(base.pins.indices.size()) != r_target.size())
        throw std::invalid_argument("continue_to: pins do not match parameter dimension");

    ContinueResult res;
    const Vec dr = r_target - prev.r;
    if (dr.norm() == 0.0) {
        res.points.push_back(prev);
        return res;
    }

    StepSizeState ss = cfg.step;
    ss.tol = cfg.solver.tol_abs;
    ss.model =
        cfg.corrector == CorrectorKind::newton_kkt ? StepModel::quadratic : StepModel::linear;

    NlpProblem p = base;
    PathPoint cur = prev;
    double s = 0.0;
    double h = cfg.mode == ContinMode::adaptive ? std::clamp(ss.h, ss.h_min, ss.h_max) : 1.0;
    int failed_attempts = 0;

    while (s < 1.0) {
        double h_step = std::min(h, 1.0 - s);
        // stretch at most 25% to land on the endpoint instead of leaving a
        // sliver that would cost a whole extra corrector solve
        if (1.0 - s - h_step < 0.25 * h_step) h_step = 1.0 - s;
        for (;;) {
            const double s_next = std::min(1.0, s + h_step);
            const Vec r_next = s_next >= 1.0 ? r_target : Vec(prev.r + s_next * dr);
            p.pins.values = r_next;

            auto tp = std::chrono::steady_clock::now();
            // prediction always targets the sub-step point fully; the step
            // length enters through the spacing of the sub-targets
            const Prediction pred = cfg.predictor == PredictorKind::euler
                                        ? euler_predict(cur, r_next, 1.0)
                                        : constant_predict(cur);
            res.predictor_seconds += seconds_since(tp);

            auto tc = std::chrono::steady_clock::now();
            KktSolution sol = run_corrector(p, pred, cfg);
            res.corrector_seconds += seconds_since(tc);
            res.total_iterations += sol.iterations;

            if (solve_ok(sol.status)) {
                auto ts = std::chrono::steady_clock::now();
                res.points.push_back(make_path_point(p, r_next, std::move(sol)));
                res.predictor_seconds += seconds_since(ts);
                cur = res.points.back();
                if (cfg.mode == ContinMode::adaptive) {
                    ss.h = h_step;
                    h = adapt_step(ss, cur.corrector_stats);
                }
                s = s_next;
                break;
            }
            res.fail_status = sol.status;
            SIMTRACK_LOG(LogLevel::Debug, "continuation: corrector "
                                              << status_to_string(sol.status) << " at h=" << h_step
                                              << ", halving");
            h_step *= 0.5;
            if (h_step < ss.h_min || ++failed_attempts >= kMaxFailedAttempts) {
                res.ok = false;
                res.path_failure = true;
                return res;
            }
        }
    }
    return res;
}

std::optional<Vec> linear_step_query(const PathPoint& prev, const Vec& r_new, double eps_tol) {
    const double dist = (r_new - prev.r).norm();
    if (dist == 0.0) return prev.solution.x;
    if (!prev.sens || !prev.sens->reliable) return std::nullopt;
    if (dist < eps_tol) return tangent_predict(prev.solution, *prev.sens, r_new);
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// grid sweeps

namespace {

struct GridShape {
    int n_axes = 1;
    int len0 = 0, len1 = 1;
    int flat(int i0, int i1) const { return i0 * len1 + i1; }
};

// grid points that cannot satisfy an element total together with z >= 0:
// applies every conservation row in which all swept species participate
bool grid_point_infeasible(const ConservationSystem& cons, const std::vector<GridAxis>& axes,
                           const Vec& r) {
    for (int k = 0; k < r.size(); ++k)
        if (r[k] < 0.0) return true;
    for (int e = 0; e < cons.C.rows(); ++e) {
        double lhs = 0.0;
        bool all = true;
        for (size_t k = 0; k < axes.size(); ++k) {
            const double c = cons.C(e, axes[k].species);
            if (c <= 0.0) {
                all = false;
                break;
            }
            lhs += c * r[static_cast<int>(k)];
        }
        if (all && lhs > cons.b[e] + 1e-9) return true;
    }
    return false;
}

// index order along one axis, starting from the end nearest the anchor value
std::vector<int> axis_order(const std::vector<double>& vals, double anchor) {
    std::vector<int> seq(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) seq[i] = static_cast<int>(i);
    if (std::abs(anchor - vals.front()) > std::abs(anchor - vals.back()))
        std::reverse(seq.begin(), seq.end());
    return seq;
}

const PathPoint* nearest_solved(const std::vector<PathPoint>& solved, const Vec& r) {
    const PathPoint* best = nullptr;
    double best_d = kNan;
    for (const auto& pp : solved) {
        const double d = (pp.r - r).norm();
        if (!best || d < best_d) {
            best = &pp;
            best_d = d;
        }
    }
    return best;
}

struct RowOutcome {
    SweepRow row;
    std::optional<PathPoint> point;  // set when the row holds a fresh solution
    double corrector_seconds = 0, predictor_seconds = 0;
    int attempts_iterations = 0;
};

// solve (or shortcut) one grid point starting from ws
RowOutcome run_grid_point(const NlpProblem& prob, const PathPoint& ws, const Vec& r,
                          const ContinuationConfig& cfg) {
    RowOutcome out;
    out.row.r = r;
    out.row.phi = kNan;
    const Mechanism& m = *prob.mech;

    if ((ws.r - r).norm() == 0.0) {
        // exact hit on an already-solved point (the anchor's own grid node)
        out.row.status = status_to_string(ws.solution.status);
        out.row.iterations = 0;
        out.row.z = ws.solution.x;
        out.row.phi = objective_phi(m, out.row.z);
        if (ws.sens) out.row.tangents = ws.sens->dx_dr;
        return out;
    }

    if (cfg.mode == ContinMode::linear_step) {
        if (auto lin = linear_step_query(ws, r, cfg.eps_tol)) {
            out.row.status = "linear";
            out.row.iterations = 0;
            out.row.z = *lin;
            out.row.phi = objective_phi(m, out.row.z);
            return out;
        }
    }

    ContinuationConfig ccfg = cfg;
    if (ccfg.mode == ContinMode::linear_step) ccfg.mode = ContinMode::full_step;
    ContinueResult cr = continue_to(ws, r, prob, ccfg);
    out.corrector_seconds = cr.corrector_seconds;
    out.predictor_seconds = cr.predictor_seconds;
    out.attempts_iterations = cr.total_iterations;
    out.row.iterations = cr.total_iterations;
    if (cr.ok) {
        PathPoint pp = std::move(cr.points.back());
        out.row.status = status_to_string(pp.solution.status);
        out.row.z = pp.solution.x;
        out.row.phi = objective_phi(m, out.row.z);
        if (pp.sens) out.row.tangents = pp.sens->dx_dr;
        out.point = std::move(pp);
    } else {
        out.row.status = "path_failure";
    }
    return out;
}

void book_outcome(SweepResult& res, const GridShape& shape, int i0, int i1, RowOutcome&& out,
                  std::vector<PathPoint>* solved) {
    out.row.idx = shape.n_axes == 2 ? std::vector<int>{i0, i1} : std::vector<int>{i0};
    res.corrector_seconds += out.corrector_seconds;
    res.predictor_seconds += out.predictor_seconds;
    res.total_iterations_all += out.attempts_iterations;
    if (out.row.status == "linear") {
        ++res.n_linear;
    } else if (out.row.status == "converged" || out.row.status == "restoration_used") {
        ++res.n_converged;
        res.total_iterations += out.row.iterations;
    } else {
        ++res.n_failed;
    }
    if (out.point && solved) solved->push_back(std::move(*out.point));
    res.rows[shape.flat(i0, i1)] = std::move(out.row);
}

}  // namespace

SweepResult sweep_grid(const NlpProblem& base, const PathPoint& anchor,
                       const std::vector<GridAxis>& axes, const ContinuationConfig& cfg,
                       int jobs) {
    if (!base.mech) throw std::invalid_argument("sweep_grid: missing mechanism");
    if (axes.empty() || axes.size() > 2)
        throw std::invalid_argument("sweep_grid: one or two grid axes supported");
    for (const auto& ax : axes) {
        if (ax.values.empty()) throw std::invalid_argument("sweep_grid: empty grid axis");
        if (ax.species < 0 || ax.species >= base.mech->n_species())
            throw std::invalid_argument("sweep_grid: axis species out of range");
    }
    if (!solve_ok(anchor.solution.status))
        throw std::invalid_argument("sweep_grid: anchor is not converged");
    if (anchor.r.size() != static_cast<Eigen::Index>(axes.size()))
        throw std::invalid_argument("sweep_grid: anchor parameter dimension mismatch");

    NlpProblem prob = base;
    prob.pins.indices.clear();
    for (const auto& ax : axes) prob.pins.indices.push_back(ax.species);
    prob.pins.values = anchor.r;

    GridShape shape;
    shape.n_axes = static_cast<int>(axes.size());
    shape.len0 = static_cast<int>(axes[0].values.size());
    shape.len1 = shape.n_axes == 2 ? static_cast<int>(axes[1].values.size()) : 1;

    SweepResult res;
    res.rows.resize(static_cast<size_t>(shape.len0) * shape.len1);

    auto point_r = [&](int i0, int i1) {
        Vec r(shape.n_axes);
        r[0] = axes[0].values[static_cast<size_t>(i0)];
        if (shape.n_axes == 2) r[1] = axes[1].values[static_cast<size_t>(i1)];
        return r;
    };
    auto skip_row = [&](int i0, int i1, const Vec& r) {
        SweepRow row;
        row.idx = shape.n_axes == 2 ? std::vector<int>{i0, i1} : std::vector<int>{i0};
        row.r = r;
        row.phi = kNan;
        row.status = "skipped_infeasible";
        ++res.n_skipped;
        res.rows[shape.flat(i0, i1)] = std::move(row);
    };

    const std::vector<int> seq0 = axis_order(axes[0].values, anchor.r[0]);

    if (jobs <= 1 || shape.n_axes == 1) {
        // serpentine walk from the corner nearest the anchor, warm-starting
        // each point from the nearest already-solved one
        std::vector<PathPoint> solved{anchor};
        bool rev1 = shape.n_axes == 2 &&
                    std::abs(anchor.r[1] - axes[1].values.front()) >
                        std::abs(anchor.r[1] - axes[1].values.back());
        for (int i0 : seq0) {
            std::vector<int> seq1(static_cast<size_t>(shape.len1));
            for (int j = 0; j < shape.len1; ++j) seq1[static_cast<size_t>(j)] = j;
            if (rev1) std::reverse(seq1.begin(), seq1.end());
            if (shape.n_axes == 2) rev1 = !rev1;
            for (int i1 : seq1) {
                const Vec r = point_r(i0, i1);
                if (grid_point_infeasible(base.cons, axes, r)) {
                    skip_row(i0, i1, r);
                    continue;
                }
                const PathPoint* ws = nearest_solved(solved, r);
                book_outcome(res, shape, i0, i1, run_grid_point(prob, *ws, r, cfg), &solved);
            }
        }
        return res;
    }

    // parallel mode: solve a seed column sequentially, then expand each grid
    // row outward from its seed concurrently; the warm-start parents are fixed
    // by grid geometry, so the result is independent of scheduling
    int j_seed = 0;
    for (int j = 1; j < shape.len1; ++j)
        if (std::abs(axes[1].values[static_cast<size_t>(j)] - anchor.r[1]) <
            std::abs(axes[1].values[static_cast<size_t>(j_seed)] - anchor.r[1]))
            j_seed = j;

    std::vector<std::optional<PathPoint>> seed(static_cast<size_t>(shape.len0));
    std::vector<RowOutcome> seed_out(static_cast<size_t>(shape.len0));
    std::vector<bool> seed_skipped(static_cast<size_t>(shape.len0), false);
    const PathPoint* chain = &anchor;
    for (int k = 0; k < shape.len0; ++k) {
        const int i0 = seq0[static_cast<size_t>(k)];
        const Vec r = point_r(i0, j_seed);
        if (grid_point_infeasible(base.cons, axes, r)) {
            seed_skipped[static_cast<size_t>(i0)] = true;
            continue;
        }
        RowOutcome out = run_grid_point(prob, *chain, r, cfg);
        if (out.point) {
            seed[static_cast<size_t>(i0)] = *out.point;
            chain = &*seed[static_cast<size_t>(i0)];
        }
        seed_out[static_cast<size_t>(i0)] = std::move(out);
    }

    std::vector<std::vector<RowOutcome>> row_out(static_cast<size_t>(shape.len0));
    std::atomic<int> next_row{0};
    auto worker = [&] {
        for (;;) {
            const int k = next_row.fetch_add(1);
            if (k >= shape.len0) return;
            const int i0 = seq0[static_cast<size_t>(k)];
            auto& outs = row_out[static_cast<size_t>(i0)];
            outs.resize(static_cast<size_t>(shape.len1));
            // fall back to the nearest converged seed (then the anchor) when
            // this row's own seed is missing
            const PathPoint* row_start = nullptr;
            if (seed[static_cast<size_t>(i0)]) {
                row_start = &*seed[static_cast<size_t>(i0)];
            } else {
                for (int dist = 1; dist < shape.len0 && !row_start; ++dist) {
                    if (i0 - dist >= 0 && seed[static_cast<size_t>(i0 - dist)])
                        row_start = &*seed[static_cast<size_t>(i0 - dist)];
                    else if (i0 + dist < shape.len0 && seed[static_cast<size_t>(i0 + dist)])
                        row_start = &*seed[static_cast<size_t>(i0 + dist)];
                }
                if (!row_start) row_start = &anchor;
            }
            for (int dir : {1, -1}) {
                const PathPoint* ws = row_start;
                for (int i1 = j_seed + dir; i1 >= 0 && i1 < shape.len1; i1 += dir) {
                    const Vec r = point_r(i0, i1);
                    if (grid_point_infeasible(base.cons, axes, r)) continue;
                    auto& slot = outs[static_cast<size_t>(i1)];
                    slot = run_grid_point(prob, *ws, r, cfg);
                    if (slot.point) ws = &*slot.point;
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // merge in original grid order for deterministic aggregation
    for (int i0 = 0; i0 < shape.len0; ++i0) {
        for (int i1 = 0; i1 < shape.len1; ++i1) {
            const Vec r = point_r(i0, i1);
            if (grid_point_infeasible(base.cons, axes, r)) {
                skip_row(i0, i1, r);
                continue;
            }
            RowOutcome& out = i1 == j_seed ? seed_out[static_cast<size_t>(i0)]
                                           : row_out[static_cast<size_t>(i0)][static_cast<size_t>(i1)];
            book_outcome(res, shape, i0, i1, std::move(out), nullptr);
        }
    }
    return res;
}

}  // namespace simtrack
