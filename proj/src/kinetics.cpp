#include "simtrack/kinetics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "simtrack/dual.hpp"

namespace simtrack {

using detail::Dual;
using detail::pow_i;

// ---------------------------------------------------------------------------
// thermo

double ThermoPoly::cp_R(double T) const {
    const auto& a = (T < t_mid) ? low : high;
    return a[0] + T * (a[1] + T * (a[2] + T * (a[3] + T * a[4])));
}

double ThermoPoly::h_RT(double T) const {
    const auto& a = (T < t_mid) ? low : high;
    return a[0] + T * (a[1] / 2 + T * (a[2] / 3 + T * (a[3] / 4 + T * a[4] / 5))) + a[5] / T;
}

double ThermoPoly::s_R(double T) const {
    const auto& a = (T < t_mid) ? low : high;
    return a[0] * std::log(T) + T * (a[1] + T * (a[2] / 2 + T * (a[3] / 3 + T * a[4] / 4))) + a[6];
}

int Mechanism::species_index(const std::string& name) const {
    for (int i = 0; i < n_species(); ++i)
        if (species[i] == name) return i;
    return -1;
}

// ---------------------------------------------------------------------------
// generic rate evaluation
//
// Everything below is templated over the scalar type so that dual numbers
// can be pushed through for exact first and second derivatives. The
// expressions are rational in z: with u = sum(z), the mass density is
// rho = p*1e-6 / (R T u) (kg/cm^3), concentrations are c = rho*z, and
// S = (net stoichiometry * concentration rates) / rho.

namespace {

template <class T>
void eval_source_impl(const Mechanism& m, const T* z, T* S) {
    const int n = m.n_species();
    T u(0.0);
    for (int i = 0; i < n; ++i) u += z[i];
    const T rho = (m.pressure * 1e-6 / (kGasConstant * m.temperature)) / u;

    std::vector<T> c(n);
    for (int i = 0; i < n; ++i) c[i] = rho * z[i];
    for (int i = 0; i < n; ++i) S[i] = T(0.0);

    for (int j = 0; j < m.n_reactions(); ++j) {
        const Reaction& rx = m.reactions[j];
        T rf(m.kf[j]), rr(m.kr[j]);
        for (int i = 0; i < n; ++i) {
            if (rx.forward_stoich[i] > 0) rf = rf * pow_i(c[i], rx.forward_stoich[i]);
            if (rx.reverse_stoich[i] > 0) rr = rr * pow_i(c[i], rx.reverse_stoich[i]);
        }
        T w = rf - rr;
        if (rx.has_third_body) {
            T tb(0.0);
            for (int i = 0; i < n; ++i) tb += rx.alpha[i] * c[i];
            w = w * tb;
        }
        for (int i = 0; i < n; ++i) {
            const int nu = m.net_stoich(j, i);
            if (nu != 0) S[i] += static_cast<double>(nu) * w;
        }
    }
    for (int i = 0; i < n; ++i) S[i] = S[i] / rho;
}

// Analytic dS/dz in product form: derivatives of c^nu are expanded as
// nu * c^(nu-1) * (other factors), which stays well defined at c = 0.
template <class T>
void eval_jacobian_impl(const Mechanism& m, const T* z, T* J /* row-major n x n */) {
    const int n = m.n_species();
    T u(0.0);
    for (int i = 0; i < n; ++i) u += z[i];
    const T rho = (m.pressure * 1e-6 / (kGasConstant * m.temperature)) / u;

    std::vector<T> c(n);
    for (int i = 0; i < n; ++i) c[i] = rho * z[i];

    std::vector<T> R(n, T(0.0));          // concentration-space rates
    std::vector<T> dRdc(n * n, T(0.0));   // row-major
    std::vector<T> dw(n);

    for (int j = 0; j < m.n_reactions(); ++j) {
        const Reaction& rx = m.reactions[j];
        T rf(m.kf[j]), rr(m.kr[j]);
        for (int i = 0; i < n; ++i) {
            if (rx.forward_stoich[i] > 0) rf = rf * pow_i(c[i], rx.forward_stoich[i]);
            if (rx.reverse_stoich[i] > 0) rr = rr * pow_i(c[i], rx.reverse_stoich[i]);
        }
        T tb(1.0);
        if (rx.has_third_body) {
            tb = T(0.0);
            for (int i = 0; i < n; ++i) tb += rx.alpha[i] * c[i];
        }
        const T net = rf - rr;

        for (int k = 0; k < n; ++k) {
            T d(0.0);
            if (rx.forward_stoich[k] > 0) {
                T p(m.kf[j] * rx.forward_stoich[k]);
                for (int i = 0; i < n; ++i) {
                    const int nu = rx.forward_stoich[i];
                    if (nu == 0) continue;
                    p = p * pow_i(c[i], i == k ? nu - 1 : nu);
                }
                d += p;
            }
            if (rx.reverse_stoich[k] > 0) {
                T p(m.kr[j] * rx.reverse_stoich[k]);
                for (int i = 0; i < n; ++i) {
                    const int nu = rx.reverse_stoich[i];
                    if (nu == 0) continue;
                    p = p * pow_i(c[i], i == k ? nu - 1 : nu);
                }
                d -= p;
            }
            dw[k] = d * tb;
            if (rx.has_third_body) dw[k] += net * rx.alpha[k];
        }
        for (int i = 0; i < n; ++i) {
            const int nu = m.net_stoich(j, i);
            if (nu == 0) continue;
            R[i] += static_cast<double>(nu) * net * tb;
            for (int k = 0; k < n; ++k) dRdc[i * n + k] += static_cast<double>(nu) * dw[k];
        }
    }

    // chain rule through c = rho(z) z:
    //   dS_i/dz_k = dRdc_ik - (sum_m dRdc_im z_m)/u + S_i/u,  S_i = R_i/rho
    for (int i = 0; i < n; ++i) {
        T rowdot(0.0);
        for (int mcol = 0; mcol < n; ++mcol) rowdot += dRdc[i * n + mcol] * z[mcol];
        const T Si_over_u = R[i] / rho / u;
        for (int k = 0; k < n; ++k) J[i * n + k] = dRdc[i * n + k] - rowdot / u + Si_over_u;
    }
}

// (D_z J_S) v via one dual sweep over the analytic Jacobian
template <class T>
void eval_jacobian_dir_impl(const Mechanism& m, const T* z, const T* v, T* out) {
    const int n = m.n_species();
    std::vector<Dual<T>> zd(n);
    for (int i = 0; i < n; ++i) zd[i] = Dual<T>(z[i], v[i]);
    std::vector<Dual<T>> Jd(n * n);
    eval_jacobian_impl(m, zd.data(), Jd.data());
    for (int i = 0; i < n * n; ++i) out[i] = Jd[i].dot;
}

// J1 = dF1/dz = (D_z J_S) S + J_S J_S
template <class T>
void eval_j1_impl(const Mechanism& m, const T* z, T* J1 /* row-major */) {
    const int n = m.n_species();
    std::vector<T> S(n), J(n * n), dir(n * n);
    eval_source_impl(m, z, S.data());
    eval_jacobian_impl(m, z, J.data());
    eval_jacobian_dir_impl(m, z, S.data(), dir.data());
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            T acc(0.0);
            for (int l = 0; l < n; ++l) acc += J[i * n + l] * J[l * n + k];
            J1[i * n + k] = dir[i * n + k] + acc;
        }
}

// public-entry domain handling: reject states below the slack, clamp the rest
Vec clamp_state(const Vec& z) {
    Vec out = z;
    for (int i = 0; i < z.size(); ++i) {
        if (z[i] < -kNegativeSlack)
            throw std::domain_error("source_term: component " + std::to_string(i) +
                                    " below negative slack (" + std::to_string(z[i]) + ")");
        if (out[i] < 0.0) out[i] = 0.0;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// public evaluation API

Vec concentrations(const Mechanism& m, const Vec& z) {
    const double u = z.sum();
    if (!(u > 0.0)) throw std::domain_error("concentrations: nonpositive total moles");
    const double rho = m.pressure * 1e-6 / (kGasConstant * m.temperature * u);
    return rho * z;
}

Vec source_term(const Mechanism& m, const Vec& z) {
    const Vec zc = clamp_state(z);
    Vec S(m.n_species());
    eval_source_impl(m, zc.data(), S.data());
    return S;
}

Mat jacobian(const Mechanism& m, const Vec& z) {
    const Vec zc = clamp_state(z);
    const int n = m.n_species();
    std::vector<double> J(n * n);
    eval_jacobian_impl(m, zc.data(), J.data());
    Mat out(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) out(i, k) = J[i * n + k];
    return out;
}

Mat jacobian_directional(const Mechanism& m, const Vec& z, const Vec& v) {
    const Vec zc = clamp_state(z);
    const int n = m.n_species();
    std::vector<double> out(n * n);
    eval_jacobian_dir_impl(m, zc.data(), v.data(), out.data());
    Mat J(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) J(i, k) = out[i * n + k];
    return J;
}

Vec eval_f1(const Mechanism& m, const Vec& z) {
    const int n = m.n_species();
    std::vector<double> S(n), J(n * n);
    eval_source_impl(m, z.data(), S.data());
    eval_jacobian_impl(m, z.data(), J.data());
    Vec F1(n);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int l = 0; l < n; ++l) acc += J[i * n + l] * S[l];
        F1[i] = acc;
    }
    return F1;
}

Mat eval_j1(const Mechanism& m, const Vec& z) {
    const int n = m.n_species();
    std::vector<double> J1(n * n);
    eval_j1_impl(m, z.data(), J1.data());
    Mat out(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) out(i, k) = J1[i * n + k];
    return out;
}

Mat residual_curvature(const Mechanism& m, const Vec& z, const Vec& w) {
    const int n = m.n_species();
    Mat T(n, n);
    std::vector<Dual<double>> zd(n);
    std::vector<Dual<double>> J1d(n * n);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) zd[i] = Dual<double>(z[i], i == k ? 1.0 : 0.0);
        eval_j1_impl(m, zd.data(), J1d.data());
        // column k of the curvature term is (dJ1/dz_k)^T w
        for (int jcol = 0; jcol < n; ++jcol) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += J1d[i * n + jcol].dot * w[i];
            T(jcol, k) = acc;
        }
    }
    return T;
}

double objective_phi(const Mechanism& m, const Vec& z) { return eval_f1(m, z).squaredNorm(); }

// ---------------------------------------------------------------------------
// conservation and equilibrium constants

ConservationSystem conservation_from_anchor(const Mechanism& m, const Vec& anchor) {
    if (anchor.size() != m.n_species())
        throw std::invalid_argument("conservation_from_anchor: anchor size mismatch");
    for (int i = 0; i < anchor.size(); ++i)
        if (anchor[i] < -kNegativeSlack)
            throw std::invalid_argument("conservation_from_anchor: negative anchor component");

    std::vector<int> keep;
    for (int e = 0; e < m.element_matrix.rows(); ++e)
        if (m.element_matrix.row(e).sum() > 0) keep.push_back(e);

    ConservationSystem cons;
    cons.C.resize(static_cast<int>(keep.size()), m.n_species());
    for (size_t r = 0; r < keep.size(); ++r)
        cons.C.row(static_cast<int>(r)) = m.element_matrix.row(keep[r]).cast<double>();
    cons.anchor = anchor;
    cons.b = cons.C * anchor;
    return cons;
}

double equilibrium_constant(const Mechanism& m, int reaction) {
    if (reaction < 0 || reaction >= m.n_reactions())
        throw std::invalid_argument("equilibrium_constant: reaction index out of range");
    const Reaction& rx = m.reactions[reaction];
    double dg = 0.0;
    int dnu = 0;
    for (int i = 0; i < m.n_species(); ++i) {
        const int nu = rx.reverse_stoich[i] - rx.forward_stoich[i];
        if (nu == 0) continue;
        if (m.thermo.empty() || m.thermo[i].t_high <= 0.0)
            throw std::invalid_argument("equilibrium_constant: missing thermo for species " +
                                        m.species[i]);
        dg += nu * m.thermo[i].g_RT(m.temperature);
        dnu += nu;
    }
    const double kp = std::exp(-dg);
    // standard concentration in mol/cm^3
    const double c0 = kStandardPressure / (kGasConstant * m.temperature) * 1e-6;
    return kp * std::pow(c0, dnu);
}

// ---------------------------------------------------------------------------
// validation and baking

void finalize_mechanism(Mechanism& m) {
    const int n = m.n_species();
    if (n == 0) throw std::invalid_argument("mechanism: no species");
    {
        std::set<std::string> seen;
        for (const auto& s : m.species)
            if (!seen.insert(s).second)
                throw std::invalid_argument("mechanism: duplicate species " + s);
    }
    if (!(m.temperature > 0.0) || !(m.pressure > 0.0))
        throw std::invalid_argument("mechanism: temperature and pressure must be positive");
    if (m.element_matrix.rows() != static_cast<int>(m.elements.size()) ||
        m.element_matrix.cols() != n)
        throw std::invalid_argument("mechanism: element matrix shape mismatch");
    if (m.element_matrix.minCoeff() < 0)
        throw std::invalid_argument("mechanism: negative element count");
    if (m.molar_masses.size() != n)
        throw std::invalid_argument("mechanism: molar mass vector size mismatch");

    m.net_stoich.resize(m.n_reactions(), n);
    for (int j = 0; j < m.n_reactions(); ++j) {
        Reaction& rx = m.reactions[j];
        if (rx.forward_stoich.size() != n || rx.reverse_stoich.size() != n)
            throw std::invalid_argument("mechanism: reaction " + std::to_string(j) +
                                        " stoichiometry size mismatch");
        if (!(rx.A > 0.0))
            throw std::invalid_argument("mechanism: reaction " + std::to_string(j) +
                                        " has nonpositive A");
        if (rx.has_third_body) {
            if (rx.alpha.size() != n)
                throw std::invalid_argument("mechanism: reaction " + std::to_string(j) +
                                            " third-body efficiency size mismatch");
            if (rx.alpha.minCoeff() < 0.0)
                throw std::invalid_argument("mechanism: reaction " + std::to_string(j) +
                                            " has negative collision efficiency");
        }
        m.net_stoich.row(j) = rx.reverse_stoich - rx.forward_stoich;
        // element balance: net stoichiometry must annihilate every element row
        for (int e = 0; e < m.element_matrix.rows(); ++e) {
            int acc = 0;
            for (int i = 0; i < n; ++i) acc += m.element_matrix(e, i) * m.net_stoich(j, i);
            if (acc != 0)
                throw std::invalid_argument("mechanism: element balance violated in reaction " +
                                            std::to_string(j) + " (element " + m.elements[e] + ")");
        }
    }

    // bake rate constants at the (fixed) mechanism temperature
    m.kf.resize(m.n_reactions());
    m.kr.resize(m.n_reactions());
    for (int j = 0; j < m.n_reactions(); ++j) {
        const Reaction& rx = m.reactions[j];
        m.kf[j] = rx.A * std::pow(m.temperature, rx.b) *
                  std::exp(-rx.Ea * 1e3 / (kGasConstant * m.temperature));
        m.kr[j] = m.kf[j] / equilibrium_constant(m, j);
    }
}

// ---------------------------------------------------------------------------
// mechanism file parser

namespace {

struct ParseCursor {
    std::string path;
    int line = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
    }
};

double parse_number(const std::string& tok, const ParseCursor& cur) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) cur.fail("malformed number '" + tok + "'");
        return v;
    } catch (const std::logic_error&) {
        cur.fail("malformed number '" + tok + "'");
    }
}

std::vector<std::string> split_tokens(const std::string& line) {
    std::istringstream iss(line);
    std::vector<std::string> toks;
    std::string t;
    while (iss >> t) toks.push_back(t);
    return toks;
}

// "NAME=VALUE" -> pair; fails when '=' is absent
std::pair<std::string, std::string> split_kv(const std::string& tok, const ParseCursor& cur) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= tok.size())
        cur.fail("expected KEY=VALUE, got '" + tok + "'");
    return {tok.substr(0, eq), tok.substr(eq + 1)};
}

}  // namespace

Mechanism load_mechanism(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mechanism file: " + path);

    Mechanism m;
    std::vector<std::pair<std::string, double>> elements;           // name, mass
    std::vector<std::string> species_names;
    std::vector<std::vector<std::pair<std::string, int>>> species_comp;
    std::vector<double> species_mass;  // explicit mass or -1 (compose)
    struct RawReaction {
        std::vector<std::string> lhs, rhs;
        bool third_body = false;
        double A = -1, b = 0, Ea = 0;
        std::vector<std::pair<std::string, double>> alpha;
        int line;
    };
    std::vector<RawReaction> raw_reactions;
    struct RawThermo {
        std::string name;
        double tlo, tmid, thi;
        std::vector<double> coeffs;
        int line;
    };
    std::vector<RawThermo> raw_thermo;
    std::vector<std::pair<std::string, double>> anchor_kv;
    bool have_T = false, have_p = false;

    ParseCursor cur{path, 0};
    std::string section;
    std::string line;
    while (std::getline(in, line)) {
        ++cur.line;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto toks = split_tokens(line);
        if (toks.empty()) continue;

        if (toks[0].front() == '[') {
            std::string joined;
            for (const auto& t : toks) joined += t;
            if (joined.back() != ']') cur.fail("malformed section header");
            section = joined.substr(1, joined.size() - 2);
            if (section != "elements" && section != "species" && section != "thermo" &&
                section != "reactions" && section != "state")
                cur.fail("unknown section [" + section + "]");
            continue;
        }
        if (section.empty()) cur.fail("content before first section header");

        if (section == "elements") {
            if (toks.size() != 2) cur.fail("expected: NAME atomic_mass");
            elements.emplace_back(toks[0], parse_number(toks[1], cur));
        } else if (section == "species") {
            std::string name = toks[0];
            std::vector<std::pair<std::string, int>> comp;
            double mass = -1.0;
            for (size_t i = 1; i < toks.size(); ++i) {
                if (toks[i].rfind("mass=", 0) == 0) {
                    mass = parse_number(toks[i].substr(5), cur);
                    continue;
                }
                auto colon = toks[i].find(':');
                if (colon == std::string::npos) cur.fail("expected ELEMENT:count");
                int count = static_cast<int>(parse_number(toks[i].substr(colon + 1), cur));
                if (count < 0) cur.fail("negative element count");
                comp.emplace_back(toks[i].substr(0, colon), count);
            }
            species_names.push_back(name);
            species_comp.push_back(std::move(comp));
            species_mass.push_back(mass);
        } else if (section == "thermo") {
            // record header: NAME Tlow Tmid Thigh, followed by 14 coefficients
            // on continuation lines
            const char c0 = toks[0][0];
            bool is_number = std::isdigit(static_cast<unsigned char>(c0)) || c0 == '-' ||
                             c0 == '+' || c0 == '.';
            if (!is_number) {
                if (toks.size() != 4) cur.fail("expected: NAME Tlow Tmid Thigh");
                raw_thermo.push_back({toks[0], parse_number(toks[1], cur),
                                      parse_number(toks[2], cur), parse_number(toks[3], cur),
                                      {}, cur.line});
            } else {
                if (raw_thermo.empty()) cur.fail("thermo coefficients before a species header");
                for (const auto& t : toks) raw_thermo.back().coeffs.push_back(parse_number(t, cur));
            }
        } else if (section == "reactions") {
            RawReaction rx;
            rx.line = cur.line;
            size_t i = 0;
            // left side up to <=>
            for (; i < toks.size() && toks[i] != "<=>"; ++i)
                if (toks[i] != "+") rx.lhs.push_back(toks[i]);
            if (i == toks.size()) cur.fail("reaction lacks <=>");
            ++i;
            for (; i < toks.size() && toks[i].find('=') == std::string::npos; ++i)
                if (toks[i] != "+") rx.rhs.push_back(toks[i]);
            bool in_alpha = false;
            for (; i < toks.size(); ++i) {
                if (toks[i] == "alpha") {
                    in_alpha = true;
                    continue;
                }
                auto [k, v] = split_kv(toks[i], cur);
                if (in_alpha)
                    rx.alpha.emplace_back(k, parse_number(v, cur));
                else if (k == "A")
                    rx.A = parse_number(v, cur);
                else if (k == "b")
                    rx.b = parse_number(v, cur);
                else if (k == "Ea")
                    rx.Ea = parse_number(v, cur);
                else if (k == "alpha")
                    cur.fail("use 'alpha NAME=VALUE ...' after the rate constants");
                else
                    cur.fail("unknown reaction key '" + k + "'");
            }
            auto strip_m = [](std::vector<std::string>& side) {
                auto it = std::find(side.begin(), side.end(), "M");
                if (it == side.end()) return false;
                side.erase(it);
                return true;
            };
            bool m_lhs = strip_m(rx.lhs), m_rhs = strip_m(rx.rhs);
            if (m_lhs != m_rhs) cur.fail("third body M must appear on both sides");
            rx.third_body = m_lhs;
            if (rx.A < 0) cur.fail("reaction lacks A=");
            raw_reactions.push_back(std::move(rx));
        } else if (section == "state") {
            if (toks[0] == "T") {
                if (toks.size() != 2) cur.fail("expected: T kelvin");
                m.temperature = parse_number(toks[1], cur);
                have_T = true;
            } else if (toks[0] == "p") {
                if (toks.size() != 2) cur.fail("expected: p pascal");
                m.pressure = parse_number(toks[1], cur);
                have_p = true;
            } else if (toks[0] == "anchor") {
                for (size_t i = 1; i < toks.size(); ++i) {
                    auto [k, v] = split_kv(toks[i], cur);
                    anchor_kv.emplace_back(k, parse_number(v, cur));
                }
            } else {
                cur.fail("unknown state entry '" + toks[0] + "'");
            }
        }
    }

    if (!have_T || !have_p) {
        cur.line = 0;
        cur.fail("missing [state] T/p");
    }

    // assemble species/element tables
    const int n = static_cast<int>(species_names.size());
    m.species = species_names;
    for (auto& [name, mass] : elements) m.elements.push_back(name);
    m.element_matrix = Eigen::MatrixXi::Zero(static_cast<int>(elements.size()), n);
    m.molar_masses.resize(n);
    auto element_index = [&](const std::string& name) {
        for (size_t e = 0; e < elements.size(); ++e)
            if (elements[e].first == name) return static_cast<int>(e);
        return -1;
    };
    for (int i = 0; i < n; ++i) {
        double composed = 0.0;
        for (auto& [el, count] : species_comp[i]) {
            int e = element_index(el);
            if (e < 0) throw std::invalid_argument(path + ": species " + m.species[i] +
                                                   " references unknown element " + el);
            m.element_matrix(e, i) += count;
            composed += count * elements[e].second;
        }
        m.molar_masses[i] = species_mass[i] > 0 ? species_mass[i] : composed;
    }

    // thermo records
    m.thermo.resize(n);
    for (const auto& rt : raw_thermo) {
        cur.line = rt.line;
        int i = m.species_index(rt.name);
        if (i < 0) cur.fail("thermo for unknown species " + rt.name);
        if (rt.coeffs.size() != 14) cur.fail("expected 14 NASA coefficients for " + rt.name +
                                             ", got " + std::to_string(rt.coeffs.size()));
        ThermoPoly tp;
        tp.t_low = rt.tlo;
        tp.t_mid = rt.tmid;
        tp.t_high = rt.thi;
        std::copy_n(rt.coeffs.begin(), 7, tp.low.begin());
        std::copy_n(rt.coeffs.begin() + 7, 7, tp.high.begin());
        m.thermo[i] = tp;
    }

    // reactions
    for (const auto& raw : raw_reactions) {
        cur.line = raw.line;
        Reaction rx;
        rx.forward_stoich = Eigen::VectorXi::Zero(n);
        rx.reverse_stoich = Eigen::VectorXi::Zero(n);
        for (const auto& name : raw.lhs) {
            int i = m.species_index(name);
            if (i < 0) cur.fail("unknown species '" + name + "' in reaction");
            rx.forward_stoich[i] += 1;
        }
        for (const auto& name : raw.rhs) {
            int i = m.species_index(name);
            if (i < 0) cur.fail("unknown species '" + name + "' in reaction");
            rx.reverse_stoich[i] += 1;
        }
        rx.A = raw.A;
        rx.b = raw.b;
        rx.Ea = raw.Ea;
        rx.has_third_body = raw.third_body;
        if (rx.has_third_body) {
            rx.alpha = Vec::Ones(n);
            for (const auto& [name, val] : raw.alpha) {
                int i = m.species_index(name);
                if (i < 0) cur.fail("unknown species '" + name + "' in alpha list");
                rx.alpha[i] = val;
            }
        }
        m.reactions.push_back(std::move(rx));
    }

    // anchor composition
    if (!anchor_kv.empty()) {
        m.anchor = Vec::Zero(n);
        for (const auto& [name, val] : anchor_kv) {
            int i = m.species_index(name);
            if (i < 0) throw std::invalid_argument(path + ": anchor references unknown species " + name);
            m.anchor[i] = val;
        }
    }

    finalize_mechanism(m);
    return m;
}

}  // namespace simtrack
