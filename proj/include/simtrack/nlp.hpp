#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "simtrack/kinetics.hpp"

namespace simtrack {

// Pinned progress variables: species indices held at prescribed values r.
struct ProgressVariableSpec {
    std::vector<int> indices;  // ordered, distinct
    Vec values;                // one value per index, >= 0
};

// The local constrained least-squares problem
//   min 0.5 ||F1(z)||^2  s.t.  C z = b,  z_pin = r,  z >= 0
// Lower bounds are implicitly zero for every species.
struct NlpProblem {
    const Mechanism* mech = nullptr;
    ConservationSystem cons;
    ProgressVariableSpec pins;
};

// Bound-constrained species held at exactly zero, with their multipliers.
struct ActiveSetState {
    std::vector<int> active;  // sorted species indices
    Vec mu;                   // one multiplier per active index
};

// Stacked residuals of the full-space problem. F2 rows are ordered
// [conservation; pins; active bounds]; J1/J2 are their Jacobians.
struct Residuals {
    Vec F1;
    Mat J1;
    Vec F2;
    Mat J2;
};

// Filter of (theta, f) pairs, theta = ||F2||_1, f = 0.5||F1||^2.
// Entries are stored with their acceptance margins already applied.
struct FilterState {
    std::vector<std::pair<double, double>> entries;
    double gamma_theta = 1e-5;
    double gamma_f = 1e-5;
    double theta_tiny = 1e-11;  // below this, violations compare as equal

    // true when (theta, f) is dominated by some filter entry
    bool dominated(double theta, double f) const;
    // insert (theta, f) with margins, dropping entries it dominates
    void add(double theta, double f);
};

enum class SolveStatus { converged, restoration_used, failed_singular, failed_maxiter };
const char* status_to_string(SolveStatus s);

// true for the two success statuses
inline bool solve_ok(SolveStatus s) {
    return s == SolveStatus::converged || s == SolveStatus::restoration_used;
}

struct SolverConfig {
    double tol_abs = 1e-10;   // absolute increment tolerance (inf norm)
    double tol_rel = 1e-9;    // relative increment tolerance
    double tol_feas = 1e-9;   // ||F2||_inf at convergence
    double tol_stat = 1e-8;   // relative stationarity (see nlp.cpp on the normalizer)
    int max_iter = 200;
    double t_min = 1e-8;      // line-search floor before restoration
    double backtrack = 0.5;
    double gamma_theta = 1e-5;
    double gamma_f = 1e-5;
    int max_soc = 1;          // second-order corrections per outer iteration
    double cond_max = 1e14;   // KKT singularity threshold (equilibrated matrix)
    double mu_drop = -1e-10;  // deactivate a bound when its multiplier is below this
    bool scale = false;       // diagonal variable scaling by anchor magnitudes
};

// One line-search outcome, kept for every outer iteration.
struct IterationRecord {
    int iter = 0;
    double theta = 0;         // ||F2||_1 after the step
    double f = 0;             // 0.5||F1||^2 after the step
    double dnorm = 0;         // inf norm of the solved increment
    double step = 0;          // accepted step length t
    std::vector<int> active;  // active bounds after the step
    bool soc = false;
    bool restored = false;
    bool f_type = false;       // accepted by the Armijo (objective) test
    bool filter_added = false;
    bool filter_ok = true;     // accepted pair was not filter-dominated
};

struct KktSolution {
    Vec x;
    Vec lambda;  // equality multipliers, [conservation rows; pins]
    Vec mu;      // bound multipliers, full length, zero off the active set
    std::vector<int> active;
    double kkt_residual = 0;  // max of ||F2||_inf and relative stationarity
    int iterations = 0;
    SolveStatus status = SolveStatus::failed_maxiter;
    std::vector<IterationRecord> log;
    // first two accepted increment norms, for the continuation step controller
    double a0 = 0;
    double a1 = 0;
};

// residual/Jacobian stack at (x, active); pure, used by tests and oracles
Residuals assemble(const NlpProblem& p, const Vec& x, const ActiveSetState& active);

// one equality-constrained Gauss-Newton step from the stacked residuals:
// [J1'J1, J2'; J2, 0][d; -lambda] = -[J1'F1; F2], solved via an
// equilibrated symmetric-indefinite factorization. Throws on singularity.
std::pair<Vec, Vec> solve_clls(const Residuals& res);

KktSolution ggn_solve(const NlpProblem& p, const Vec& x0, const SolverConfig& cfg = {});
KktSolution ggn_solve(const NlpProblem& p, const Vec& x0, const ActiveSetState& active0,
                      const SolverConfig& cfg);

// Newton on the KKT system with the exact Hessian
// L_xx = J1'J1 + (D_x J1')F1 (constraint rows are affine); falls back to the
// Gauss-Newton matrix per iteration when the inertia is wrong.
KktSolution newton_kkt_solve(const NlpProblem& p, const Vec& x0, const Vec& lambda0,
                             const SolverConfig& cfg = {});
KktSolution newton_kkt_solve(const NlpProblem& p, const Vec& x0, const Vec& lambda0,
                             const ActiveSetState& active0, const SolverConfig& cfg);

// min 0.5||xbar - x||^2 s.t. F2(xbar) = 0 and xbar >= 0 (pins substituted,
// bounds handled by projection); returns xbar. The filter is consulted so a
// restored point unacceptable to it reports failure via the engine.
Vec restore_feasibility(const NlpProblem& p, const Vec& x, const FilterState& filter);

// minimum-norm correction of the constraint residual at the trial point:
// solves min ||dd||^2 s.t. F2(x + d) + J2 dd = 0 on the non-pinned variables.
Vec soc_step(const NlpProblem& p, const Residuals& res_at_x, const Vec& d, const Vec& x);

// Completes a state from fixed components so that C z = b holds exactly.
// Requires #fixed = n - rank(C). Sets *negative when a completed component
// is below zero.
Vec complete_state(const ConservationSystem& cons,
                   const std::vector<std::pair<int, double>>& fixed,
                   bool* negative = nullptr);

struct LandscapeRow {
    std::vector<double> coords;  // scanned coordinate values
    double phi = 0;              // objective ||J_S S||^2 at the completed state
    bool valid = true;           // false when the completion has negative species
    Vec z;
};

// Evaluates the objective over a cartesian scan grid; each point is completed
// through the conservation rows. Phi is evaluated for every point (the
// surface is rational and well defined at negative completions); `valid`
// records positivity.
std::vector<LandscapeRow> landscape_scan(const Mechanism& m, const ConservationSystem& cons,
                                         const std::vector<std::pair<int, double>>& fixed,
                                         const std::vector<int>& scan_indices,
                                         const std::vector<std::vector<double>>& scan_values);

}  // namespace simtrack
