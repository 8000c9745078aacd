#pragma once

#include <vector>

#include "simtrack/kinetics.hpp"

namespace simtrack {

struct Trajectory {
    std::vector<double> times;   // strictly increasing, seconds
    std::vector<Vec> states;     // one composition per time
    double t0 = 0.0, tf = 0.0;
};

struct IntegrateOptions {
    double h_init = 0.0;      // initial step; 0 picks one from the initial slope
    double h_min = 1e-18;
    long max_steps = 2000000;
    int newton_max = 8;
    bool store_all = true;    // false keeps only the endpoints
};

// Adaptive implicit integration of Dz = S(z): an L-stable backward-Euler /
// trapezoidal pair with embedded error control; local error per step <= tol.
Trajectory integrate(const Mechanism& m, const Vec& z0, double t0, double tf, double tol,
                     const IntegrateOptions& opts = {});

// Equilibrium of the kinetics on the conservation subspace through z0:
// relaxes by integration until the source term has decayed, then polishes
// with a damped Newton step restricted to the null space of C.
Vec relax_to_equilibrium(const Mechanism& m, const ConservationSystem& cons, const Vec& z0);

}  // namespace simtrack
