#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

namespace simtrack {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Universal gas constant, J/(mol K)
inline constexpr double kGasConstant = 8.314462618;
// Standard pressure for equilibrium constants, Pa
inline constexpr double kStandardPressure = 1.0e5;
// Solver iterates may carry components this far below zero; rate evaluation
// clamps them to zero.
inline constexpr double kNegativeSlack = 1e-12;

// NASA-7 polynomial pair (low/high temperature range) for one species.
struct ThermoPoly {
    double t_low = 0.0, t_mid = 0.0, t_high = 0.0;
    std::array<double, 7> low{};
    std::array<double, 7> high{};

    double cp_R(double T) const;  // heat capacity / R
    double h_RT(double T) const;  // enthalpy / (R T)
    double s_R(double T) const;   // entropy / R
    double g_RT(double T) const { return h_RT(T) - s_R(T); }
};

// One reversible elementary reaction. Rate constants are in (cm^3, mol, s)
// units; Ea in kJ/mol. Stoichiometry is stored densely per species.
struct Reaction {
    Eigen::VectorXi forward_stoich;  // nu' per species
    Eigen::VectorXi reverse_stoich;  // nu'' per species
    double A = 0.0;
    double b = 0.0;
    double Ea = 0.0;
    bool has_third_body = false;
    Vec alpha;  // collision efficiencies, only meaningful with has_third_body
};

struct Mechanism {
    std::vector<std::string> species;
    std::vector<std::string> elements;
    Vec molar_masses;              // kg/mol per species
    Eigen::MatrixXi element_matrix;  // n_elements x n_species atom counts
    std::vector<Reaction> reactions;
    double temperature = 0.0;  // K (isothermal)
    double pressure = 0.0;     // Pa (isobaric)
    std::vector<ThermoPoly> thermo;
    Vec anchor;  // reference composition from the [state] section, mol/kg

    // baked by finalize_mechanism(): forward/reverse rate constants at
    // `temperature` and net stoichiometry rows
    Vec kf, kr;
    Eigen::MatrixXi net_stoich;  // n_reactions x n_species (nu'' - nu')

    int n_species() const { return static_cast<int>(species.size()); }
    int n_reactions() const { return static_cast<int>(reactions.size()); }
    // index of a species name, -1 if unknown
    int species_index(const std::string& name) const;
};

// Element-conservation relations C z = b anchored at a composition.
struct ConservationSystem {
    Mat C;  // one row per element present in at least one species
    Vec b;  // totals computed from the anchor, mol/kg
    Vec anchor;

    int n_rows() const { return static_cast<int>(C.rows()); }
};

// Parse a mechanism file (see data/h2_ren2006.mech for the format) and
// validate all invariants. Throws std::runtime_error with file:line context
// on parse errors and std::invalid_argument on semantic errors (unknown
// species, element-balance violations, ...).
Mechanism load_mechanism(const std::string& path);

// Validate invariants and bake derived data (rate constants, net
// stoichiometry). load_mechanism calls this; call it directly when building
// a Mechanism in code.
void finalize_mechanism(Mechanism& m);

// Molar concentrations in mol/cm^3: c_i = z_i p / (R T sum(z)).
// Throws std::domain_error when sum(z) <= 0.
Vec concentrations(const Mechanism& m, const Vec& z);

// Right-hand side S(z) = dz/dt in mol/(kg s). Components in
// [-kNegativeSlack, 0) are clamped to zero; anything more negative throws
// std::domain_error.
Vec source_term(const Mechanism& m, const Vec& z);

// Analytic Jacobian dS/dz (1/s). Same domain handling as source_term.
Mat jacobian(const Mechanism& m, const Vec& z);

// Directional derivative (D_z J_S) v, an n x n matrix.
Mat jacobian_directional(const Mechanism& m, const Vec& z, const Vec& v);

// Build conservation rows from the element matrix and totals from `anchor`.
// Elements absent from every species are dropped.
ConservationSystem conservation_from_anchor(const Mechanism& m, const Vec& anchor);

// Concentration-based equilibrium constant K_c of one reaction at the
// mechanism temperature, in (cm^3, mol) units.
double equilibrium_constant(const Mechanism& m, int reaction);

// Objective building blocks. These evaluate the raw rational rate
// expressions without clamping, which keeps them usable for landscape scans
// at infeasible (negative) completions.
Vec eval_f1(const Mechanism& m, const Vec& z);  // J_S(z) S(z)
Mat eval_j1(const Mechanism& m, const Vec& z);  // dF1/dz = (D_z J_S)S + J_S^2
// sum_i w_i * Hessian(F1_i); column k is (dJ1/dz_k)^T w
Mat residual_curvature(const Mechanism& m, const Vec& z, const Vec& w);
// Phi = ||F1||^2
double objective_phi(const Mechanism& m, const Vec& z);

}  // namespace simtrack
