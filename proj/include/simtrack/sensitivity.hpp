#pragma once

#include "simtrack/nlp.hpp"

namespace simtrack {

// First-order sensitivities of a KKT point with respect to the pinned
// progress-variable values, obtained from one factorization of the
// exact-Hessian KKT matrix.
struct SensitivityMatrix {
    Mat dx_dr;       // n x n_r state tangents
    Mat dlambda_dr;  // (m_cons + n_pins) x n_r equality-multiplier tangents
    Mat dmu_dr;      // n x n_r bound-multiplier tangents (zero off the active set)
    std::vector<int> pins;  // parameter ordering: pins[j] is the species of r_j
    Vec r0;                 // parameter values the solution was computed at
    bool reliable = false;  // false when strict complementarity or
                            // nonsingularity fails; matrices are then empty
};

// Solves the linear sensitivity system at a converged solution. Throws
// std::invalid_argument when sol does not hold a usable solution.
SensitivityMatrix kkt_sensitivities(const NlpProblem& p, const KktSolution& sol);

// First-order prediction z* + dz*/dr (r_new - r0). Requires sens.reliable.
Vec tangent_predict(const KktSolution& sol, const SensitivityMatrix& sens, const Vec& r_new);

}  // namespace simtrack
