#pragma once

// shared fixtures for the test binaries: the bundled mechanism, the reference
// compositions its anchor was taken from, and small numeric helpers.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "simtrack/kinetics.hpp"
#include "simtrack/nlp.hpp"

namespace testsup {

using simtrack::Mat;
using simtrack::Vec;

inline std::string data_path(const std::string& name) {
    return std::string(SIMTRACK_DATA_DIR) + "/" + name;
}

// species order in the bundled file: O, H2, H, OH, H2O, N2
enum Sp { O = 0, H2 = 1, H = 2, OH = 3, H2O = 4, N2 = 5 };

inline const simtrack::Mechanism& mech() {
    static const simtrack::Mechanism m = simtrack::load_mechanism(data_path("h2_ren2006.mech"));
    return m;
}

// anchor composition shipped in the mechanism file (mol/kg)
inline Vec anchor_state() {
    Vec z(6);
    z << 0.34546441, 2.0279732, 1.5195639, 0.76454959, 3.0, 32.905130;
    return z;
}

// published solution of the pinned problem at z_H2O = 3.0 used as the
// regression reference; absolute reproduction depends on the thermo data, so
// comparisons against it carry a 1% band
inline Vec reference_solution() {
    Vec z(6);
    z << 0.34563763, 2.0281615, 1.5193606, 0.76437637, 3.0, 32.905130;
    return z;
}

inline simtrack::NlpProblem golden_problem() {
    simtrack::NlpProblem p;
    p.mech = &mech();
    p.cons = simtrack::conservation_from_anchor(mech(), mech().anchor);
    p.pins.indices = {H2O};
    p.pins.values = Vec::Constant(1, 3.0);
    return p;
}

// relative mismatch with an absolute floor tied to the array scale, so exact
// zeros compare cleanly against roundoff
inline double mixed_err(const Mat& a, const Mat& b) {
    const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double mixed_err(const Vec& a, const Vec& b) {
    return mixed_err(Mat(a), Mat(b));
}

// random composition in [1e-4, 40] mol/kg per species
inline Vec random_state(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(1e-4, 40.0);
    Vec z(mech().n_species());
    for (int i = 0; i < z.size(); ++i) z(i) = u(rng);
    return z;
}

// central finite-difference Jacobian of a vector-valued function
template <class F>
Mat fd_jacobian(const F& f, const Vec& z, double rel_step) {
    const Vec f0 = f(z);
    Mat J(f0.size(), z.size());
    for (int k = 0; k < z.size(); ++k) {
        const double h = rel_step * std::max(1.0, std::abs(z(k)));
        Vec zp = z, zm = z;
        zp(k) += h;
        zm(k) -= h;
        J.col(k) = (f(zp) - f(zm)) / (2.0 * h);
    }
    return J;
}

}  // namespace testsup
