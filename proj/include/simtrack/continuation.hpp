#pragma once

#include <optional>
#include <string>
#include <vector>

#include "simtrack/sensitivity.hpp"

namespace simtrack {

// ---------------------------------------------------------------------------
// path points and step-size control

struct CorrectorStats {
    int m = 0;            // corrector iterations
    double a0 = 0.0;      // first increment norm (initial error estimate)
    double a1 = 0.0;      // second increment norm
};

struct PathPoint {
    Vec r;                                  // pinned progress-variable values
    KktSolution solution;                   // converged corrector output
    std::optional<SensitivityMatrix> sens;  // tangents at this point, if reliable
    CorrectorStats corrector_stats;
};

enum class StepModel { linear, quadratic };

// den Heijer-Rheinboldt style controller state: pick the largest parameter
// step whose predicted corrector iteration count stays at k_desired.
struct StepSizeState {
    double h = 0.4;       // current step as a fraction of the remaining segment
    int k_desired = 10;   // target corrector iterations
    StepModel model = StepModel::linear;  // contraction model of the corrector
    double h_min = 1e-3;
    double h_max = 1.0;
    double growth = 2.0;  // per-step growth clamp
    double tol = 1e-10;   // corrector accuracy the model aims for; continue_to
                          // sets this from the solver tolerance
};

enum class ContinMode { full_step, adaptive, linear_step };
enum class PredictorKind { euler, constant };
enum class CorrectorKind { ggn, newton_kkt };

struct ContinuationConfig {
    ContinMode mode = ContinMode::full_step;
    double eps_tol = 1.1;  // linear-step acceptance radius (mol/kg)
    PredictorKind predictor = PredictorKind::euler;
    CorrectorKind corrector = CorrectorKind::ggn;
    StepSizeState step;    // initial controller state for adaptive mode
    SolverConfig solver;
};

// warm start handed to the corrector
struct Prediction {
    Vec x;
    Vec lambda;
    std::vector<int> active;  // carried active set
};

// First-order prediction of the path point at r_next, h in [0, 1] scaling the
// parameter increment. Falls back to the previous solution when prev carries
// no reliable sensitivities.
Prediction euler_predict(const PathPoint& prev, const Vec& r_next, double h);

// Updated step length from the last corrector run's contraction statistics.
double adapt_step(const StepSizeState& state, const CorrectorStats& stats);

struct ContinueResult {
    std::vector<PathPoint> points;  // ends at r_target on success
    bool ok = true;
    bool path_failure = false;            // gave up after step reductions
    SolveStatus fail_status = SolveStatus::converged;  // status of last attempt
    int total_iterations = 0;             // corrector iterations, all attempts
    double corrector_seconds = 0.0;
    double predictor_seconds = 0.0;
};

// Tracks the solution path from prev to r_target by predictor-corrector
// steps along the straight parameter segment.
ContinueResult continue_to(const PathPoint& prev, const Vec& r_target,
                           const NlpProblem& base, const ContinuationConfig& cfg);

// Linear shortcut: when r_new is within eps_tol of prev, return the tangent
// prediction without correcting; otherwise empty (caller defers to continue_to).
std::optional<Vec> linear_step_query(const PathPoint& prev, const Vec& r_new, double eps_tol);

// ---------------------------------------------------------------------------
// grid sweeps

struct GridAxis {
    int species = -1;            // pinned species index
    std::vector<double> values;  // grid values along this axis
};

struct SweepRow {
    std::vector<int> idx;  // grid index per axis
    Vec r;
    Vec z;           // solution (or linear prediction); empty when absent
    double phi = 0;  // objective at z
    std::string status;
    int iterations = 0;
    Mat tangents;    // dx_dr at this point; empty when unavailable
};

struct SweepResult {
    std::vector<SweepRow> rows;     // original grid order, axis-1 fastest
    int total_iterations = 0;       // over rows that hold a converged solution
    int total_iterations_all = 0;   // including failed attempts
    int n_converged = 0;
    int n_failed = 0;
    int n_skipped = 0;
    int n_linear = 0;
    double corrector_seconds = 0.0;
    double predictor_seconds = 0.0;
};

// Sweeps the full cartesian grid. The problem's pins are the axes' species in
// order; anchor must hold a converged solution at its r. Grid points that
// cannot satisfy conservation together with positivity are skipped up front.
// jobs > 1 dispatches grid rows to worker threads (deterministic output).
SweepResult sweep_grid(const NlpProblem& base, const PathPoint& anchor,
                       const std::vector<GridAxis>& axes, const ContinuationConfig& cfg,
                       int jobs = 1);

}  // namespace simtrack
