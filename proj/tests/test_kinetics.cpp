#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "simtrack/kinetics.hpp"
#include "simtrack/odeint.hpp"
#include "support.hpp"

using namespace simtrack;
using namespace testsup;

namespace {

// write a throwaway mechanism file and return its path
std::string write_temp(const std::string& body) {
    static int counter = 0;
    std::string path = "/tmp/simtrack_test_mech_" + std::to_string(counter++) + ".mech";
    std::ofstream out(path);
    out << body;
    return path;
}

// minimal two-species no-reaction mechanism built in code
Mechanism inert_pair() {
    Mechanism m;
    m.species = {"A2", "B"};
    m.elements = {"A", "B"};
    m.molar_masses = Vec::Constant(2, 1e-3);
    m.element_matrix.resize(2, 2);
    m.element_matrix << 2, 0, 0, 1;
    m.temperature = 1500.0;
    m.pressure = 2e5;
    m.anchor = Vec::Constant(2, 1.0);
    finalize_mechanism(m);
    return m;
}

}  // namespace

TEST_CASE("bundled mechanism loads with the expected layout") {
    const Mechanism& m = mech();
    REQUIRE(m.n_species() == 6);
    REQUIRE(m.n_reactions() == 6);
    CHECK(m.species[O] == "O");
    CHECK(m.species[H2O] == "H2O");
    CHECK(m.species[N2] == "N2");
    CHECK(m.temperature == 3000.0);
    CHECK(m.pressure == 101325.0);
    CHECK(mixed_err(m.anchor, anchor_state()) == 0.0);
    // third bodies only on the three recombination reactions
    CHECK_FALSE(m.reactions[0].has_third_body);
    CHECK(m.reactions[3].has_third_body);
    CHECK(m.reactions[3].alpha(H2) == 2.5);
    CHECK(m.reactions[3].alpha(H2O) == 12.0);
    CHECK(m.reactions[3].alpha(N2) == 1.0);
}

TEST_CASE("concentration map: total, single-species limit, scale invariance") {
    const Mechanism& m = mech();
    std::mt19937 rng(91);
    const double total = m.pressure / (kGasConstant * m.temperature) * 1e-6;  // mol/cm^3
    CHECK(total == doctest::Approx(4.06222e-6).epsilon(1e-5));
    for (int trial = 0; trial < 20; ++trial) {
        const Vec z = random_state(rng);
        const Vec c = concentrations(m, z);
        CHECK(std::abs(c.sum() - total) <= 1e-12 * total);
        // mole fractions are scale invariant
        const Vec c2 = concentrations(m, Vec(2.0 * z));
        CHECK(mixed_err(c, c2) < 1e-14);
    }
    Vec only_n2 = Vec::Zero(6);
    only_n2(N2) = 5.0;
    const Vec c = concentrations(m, only_n2);
    for (int i = 0; i < 6; ++i)
        if (i != N2) CHECK(c(i) == 0.0);
    CHECK(c(N2) == doctest::Approx(total).epsilon(1e-14));

    CHECK_THROWS_AS(concentrations(m, Vec(Vec::Zero(6))), std::domain_error);
}

TEST_CASE("source term: inert bath, element conservation, domain handling") {
    const Mechanism& m = mech();
    Vec only_n2 = Vec::Zero(6);
    only_n2(N2) = 10.0;
    CHECK(source_term(m, only_n2).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937 rng(17);
    const Mat C = m.element_matrix.cast<double>();
    for (int trial = 0; trial < 100; ++trial) {
        const Vec z = random_state(rng);
        const Vec S = source_term(m, z);
        CHECK(S(N2) == 0.0);
        CHECK((C * S).cwiseAbs().maxCoeff() <= 1e-12 * S.cwiseAbs().maxCoeff());
    }

    // slightly negative components are clamped, deeper ones rejected
    Vec z = anchor_state();
    z(O) = -0.5e-12;
    CHECK_NOTHROW(source_term(m, z));
    z(O) = -1e-9;
    CHECK_THROWS_AS(source_term(m, z), std::domain_error);
}

TEST_CASE("source term vanishes at the relaxed equilibrium") {
    const Mechanism& m = mech();
    const ConservationSystem cons = conservation_from_anchor(m, m.anchor);
    const Vec zeq = relax_to_equilibrium(m, cons, m.anchor);
    const double scale = source_term(m, m.anchor).cwiseAbs().maxCoeff();
    CHECK(source_term(m, zeq).cwiseAbs().maxCoeff() < 1e-6 * scale);
}

TEST_CASE("analytic jacobian matches central differences") {
    const Mechanism& m = mech();
    auto S = [&](const Vec& z) { return source_term(m, z); };

    // at the anchor with the documented step
    CHECK(mixed_err(jacobian(m, m.anchor), fd_jacobian(S, m.anchor, 1e-6)) < 1e-6);

    // and across random states
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec z = random_state(rng);
        CHECK(mixed_err(jacobian(m, z), fd_jacobian(S, z, 1e-6)) < 1e-6);
    }

    // N2 row identically zero, no-reaction mechanism gives a zero matrix
    CHECK(jacobian(m, anchor_state()).row(N2).cwiseAbs().maxCoeff() == 0.0);
    const Mechanism empty = inert_pair();
    CHECK(source_term(empty, empty.anchor).cwiseAbs().maxCoeff() == 0.0);
    CHECK(jacobian(empty, empty.anchor).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian directional derivative: difference quotient and linearity") {
    const Mechanism& m = mech();
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const Vec z = random_state(rng);
        Vec v(6);
        for (int i = 0; i < 6; ++i) v(i) = u(rng);
        const Mat Dv = jacobian_directional(m, z, v);
        const double eps = 1e-6;
        const Mat fd = (jacobian(m, Vec(z + eps * v)) - jacobian(m, Vec(z - eps * v))) / (2 * eps);
        CHECK(mixed_err(Dv, fd) < 1e-5);
        CHECK(mixed_err(jacobian_directional(m, z, Vec(2.0 * v)), Mat(2.0 * Dv)) < 1e-12);
    }
    CHECK(jacobian_directional(m, anchor_state(), Vec(Vec::Zero(6))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("objective stack: F1, J1 and the curvature contraction match differences") {
    const Mechanism& m = mech();
    const Vec z0 = anchor_state();

    // F1 is the jacobian applied to the source term
    CHECK(mixed_err(eval_f1(m, z0), Vec(jacobian(m, z0) * source_term(m, z0))) < 1e-14);

    auto F1 = [&](const Vec& z) { return eval_f1(m, z); };
    CHECK(mixed_err(eval_j1(m, z0), fd_jacobian(F1, z0, 1e-6)) < 1e-6);

    // gradient and Hessian of 0.5 ||F1||^2 against the assembled pieces
    auto grad = [&](const Vec& z) { return Vec(eval_j1(m, z).transpose() * eval_f1(m, z)); };
    const Mat Hfd = fd_jacobian(grad, z0, 3e-6);
    const Mat J1 = eval_j1(m, z0);
    const Mat T = residual_curvature(m, z0, eval_f1(m, z0));
    const Mat H = J1.transpose() * J1 + 0.5 * (T + T.transpose());
    CHECK(mixed_err(H, Hfd) < 1e-5);

    CHECK(objective_phi(m, z0) == doctest::Approx(eval_f1(m, z0).squaredNorm()).epsilon(1e-14));
}

TEST_CASE("conservation totals from the anchor reproduce the published arithmetic") {
    const Mechanism& m = mech();
    const ConservationSystem cons = conservation_from_anchor(m, m.anchor);
    REQUIRE(cons.n_rows() == 3);

    // order follows [elements]: H, O, N
    CHECK(cons.b(0) == doctest::Approx(12.3400599).epsilon(1e-9));
    CHECK(cons.b(1) == doctest::Approx(4.1100140).epsilon(1e-8));
    CHECK(cons.b(2) == doctest::Approx(65.8102600).epsilon(1e-9));

    // the reference solution satisfies the same totals
    const Vec totals_sol = cons.C * reference_solution();
    CHECK((totals_sol - cons.b).cwiseAbs().maxCoeff() < 1e-6);

    // both compositions close to 1 kg/kg
    CHECK(std::abs(m.anchor.dot(m.molar_masses) - 1.0) < 1e-4);
    CHECK(std::abs(reference_solution().dot(m.molar_masses) - 1.0) < 1e-4);

    CHECK_THROWS_AS(conservation_from_anchor(m, Vec(Vec::Constant(6, -1.0))),
                    std::invalid_argument);
}

TEST_CASE("equilibrium constants: pressure-independence at zero mole change, reversal") {
    const Mechanism& m = mech();
    // reaction 0 (O + H2 <=> H + OH) has zero net mole change: K_c equals K_p
    const double T = m.temperature;
    double dg = 0.0;  // sum nu_i g_i / RT
    const auto& rx = m.reactions[0];
    for (int i = 0; i < 6; ++i)
        dg += (rx.reverse_stoich(i) - rx.forward_stoich(i)) * m.thermo[i].g_RT(T);
    CHECK(equilibrium_constant(m, 0) == doctest::Approx(std::exp(-dg)).epsilon(1e-12));

    // writing a reaction backwards inverts its constant
    Mechanism rev = m;
    std::swap(rev.reactions[3].forward_stoich, rev.reactions[3].reverse_stoich);
    finalize_mechanism(rev);
    CHECK(equilibrium_constant(rev, 3) ==
          doctest::Approx(1.0 / equilibrium_constant(m, 3)).epsilon(1e-12));

    CHECK_THROWS_AS(equilibrium_constant(m, 99), std::invalid_argument);
}

TEST_CASE("baked rate constants follow the modified Arrhenius form") {
    const Mechanism& m = mech();
    for (int j = 0; j < m.n_reactions(); ++j) {
        const auto& rx = m.reactions[j];
        const double kf =
            rx.A * std::pow(m.temperature, rx.b) *
            std::exp(-rx.Ea * 1e3 / (kGasConstant * m.temperature));
        CHECK(m.kf(j) == doctest::Approx(kf).epsilon(1e-14));
        CHECK(m.kr(j) == doctest::Approx(kf / equilibrium_constant(m, j)).epsilon(1e-14));
    }
}

TEST_CASE("parser reports file and line on malformed input") {
    const std::string good =
        "[elements]\nH 1.008e-3\n[species]\nH2 H:2\nH H:1\n"
        "[thermo]\nH2 300 1000 5000\n1 0 0 0 0 0 0\n1 0 0 0 0 0 0\n"
        "H 300 1000 5000\n2.5 0 0 0 0 0 0\n2.5 0 0 0 0 0 0\n"
        "[reactions]\nH2 <=> H + H A=1e10 b=0 Ea=100\n"
        "[state]\nT 2000\np 1e5\nanchor H2=1.0 H=0.1\n";
    CHECK_NOTHROW(load_mechanism(write_temp(good)));

    // a malformed number carries path:line context
    const std::string bad = good.substr(0, good.find("A=1e10")) + "A=oops b=0 Ea=1\n[state]\nT 2000\np 1e5\nanchor H2=1.0 H=0.1\n";
    const std::string bad_path = write_temp(bad);
    try {
        load_mechanism(bad_path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(bad_path + ":") != std::string::npos);
        CHECK(std::string(e.what()).find("oops") != std::string::npos);
    }

    // unbalanced reactions are rejected during validation
    std::string unbalanced = good;
    const auto pos = unbalanced.find("H2 <=> H + H");
    unbalanced.replace(pos, std::string("H2 <=> H + H").size(), "H2 <=> H + H2");
    CHECK_THROWS_AS(load_mechanism(write_temp(unbalanced)), std::invalid_argument);

    CHECK_THROWS_AS(load_mechanism("/nonexistent/path.mech"), std::runtime_error);
}
