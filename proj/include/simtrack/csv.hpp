#pragma once

#include <string>
#include <vector>

#include "simtrack/continuation.hpp"
#include "simtrack/odeint.hpp"

namespace simtrack {

// One double as a round-trippable decimal (17 significant digits).
std::string csv_num(double v);

// Single wide row: status, iterations, phi, kkt residual, solution,
// multipliers, and tangent columns (nan when sens is null or unreliable).
void write_point_csv(const std::string& path, const NlpProblem& p, const KktSolution& sol,
                     const SensitivityMatrix* sens);

// One row per grid point in original grid order; cells without a solution
// hold nan. Tangent entries are column-major over (species, parameter).
void write_sweep_csv(const std::string& path, const Mechanism& m,
                     const std::vector<GridAxis>& axes, const SweepResult& res);

// Scan coordinates, raw phi, validity flag, completed state.
void write_landscape_csv(const std::string& path, const Mechanism& m,
                         const std::vector<int>& scan_indices,
                         const std::vector<LandscapeRow>& rows);

// Time column plus one composition column per species.
void write_trajectory_csv(const std::string& path, const Mechanism& m, const Trajectory& traj);

// Single wide row with the equilibrium composition.
void write_equilibrium_csv(const std::string& path, const Mechanism& m, const Vec& z_eq);

}  // namespace simtrack
