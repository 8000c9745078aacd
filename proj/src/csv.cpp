#include "simtrack/csv.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace simtrack {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    return out;
}

void put_row(std::ofstream& out, const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << cells[i];
    }
    out << '\n';
}

}  // namespace

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_point_csv(const std::string& path, const NlpProblem& p, const KktSolution& sol,
                     const SensitivityMatrix* sens) {
    const Mechanism& m = *p.mech;
    const int n = m.n_species();
    const int ml = static_cast<int>(sol.lambda.size());
    const int np = static_cast<int>(p.pins.indices.size());

    std::vector<std::string> head{"status", "iterations", "phi", "kkt_residual"};
    std::vector<std::string> row{status_to_string(sol.status), std::to_string(sol.iterations),
                                 csv_num(objective_phi(m, sol.x)), csv_num(sol.kkt_residual)};
    for (int i = 0; i < n; ++i) {
        head.push_back("z_" + m.species[static_cast<size_t>(i)]);
        row.push_back(csv_num(sol.x[i]));
    }
    for (int j = 0; j < ml; ++j) {
        head.push_back("lambda_" + std::to_string(j));
        row.push_back(csv_num(sol.lambda[j]));
    }
    for (int i = 0; i < n; ++i) {
        head.push_back("mu_" + m.species[static_cast<size_t>(i)]);
        row.push_back(csv_num(sol.mu[i]));
    }
    const bool have_sens = sens && sens->reliable;
    for (int j = 0; j < np; ++j) {
        const std::string& pin = m.species[static_cast<size_t>(p.pins.indices[j])];
        for (int i = 0; i < n; ++i) {
            head.push_back("dz_" + m.species[static_cast<size_t>(i)] + "_dr_" + pin);
            row.push_back(csv_num(have_sens ? sens->dx_dr(i, j) : kNan));
        }
    }

    auto out = open_out(path);
    put_row(out, head);
    put_row(out, row);
}

void write_sweep_csv(const std::string& path, const Mechanism& m,
                     const std::vector<GridAxis>& axes, const SweepResult& res) {
    const int n = m.n_species();
    const int nr = static_cast<int>(axes.size());

    std::vector<std::string> head;
    for (int k = 0; k < nr; ++k) head.push_back("idx_" + std::to_string(k));
    for (int k = 0; k < nr; ++k)
        head.push_back("r_" + m.species[static_cast<size_t>(axes[static_cast<size_t>(k)].species)]);
    for (int i = 0; i < n; ++i) head.push_back("z_" + m.species[static_cast<size_t>(i)]);
    head.push_back("phi");
    head.push_back("status");
    head.push_back("iterations");
    for (int k = 0; k < nr; ++k) {
        const std::string& pin =
            m.species[static_cast<size_t>(axes[static_cast<size_t>(k)].species)];
        for (int i = 0; i < n; ++i)
            head.push_back("dz_" + m.species[static_cast<size_t>(i)] + "_dr_" + pin);
    }

    auto out = open_out(path);
    put_row(out, head);
    for (const auto& r : res.rows) {
        std::vector<std::string> row;
        for (int v : r.idx) row.push_back(std::to_string(v));
        for (int k = 0; k < nr; ++k) row.push_back(csv_num(r.r[k]));
        const bool have_z = r.z.size() == n;
        for (int i = 0; i < n; ++i) row.push_back(csv_num(have_z ? r.z[i] : kNan));
        row.push_back(csv_num(r.phi));
        row.push_back(r.status);
        row.push_back(std::to_string(r.iterations));
        const bool have_t = r.tangents.rows() == n && r.tangents.cols() == nr;
        for (int k = 0; k < nr; ++k)
            for (int i = 0; i < n; ++i)
                row.push_back(csv_num(have_t ? r.tangents(i, k) : kNan));
        put_row(out, row);
    }
}

void write_landscape_csv(const std::string& path, const Mechanism& m,
                         const std::vector<int>& scan_indices,
                         const std::vector<LandscapeRow>& rows) {
    const int n = m.n_species();
    std::vector<std::string> head;
    for (int s : scan_indices) head.push_back("r_" + m.species[static_cast<size_t>(s)]);
    head.push_back("phi");
    head.push_back("valid");
    for (int i = 0; i < n; ++i) head.push_back("z_" + m.species[static_cast<size_t>(i)]);

    auto out = open_out(path);
    put_row(out, head);
    for (const auto& r : rows) {
        std::vector<std::string> row;
        for (double c : r.coords) row.push_back(csv_num(c));
        row.push_back(csv_num(r.phi));
        row.push_back(r.valid ? "1" : "0");
        for (int i = 0; i < n; ++i) row.push_back(csv_num(r.z[i]));
        put_row(out, row);
    }
}

void write_trajectory_csv(const std::string& path, const Mechanism& m, const Trajectory& traj) {
    const int n = m.n_species();
    std::vector<std::string> head{"t_s"};
    for (int i = 0; i < n; ++i)
        head.push_back("z_" + m.species[static_cast<size_t>(i)] + "_mol_per_kg");

    auto out = open_out(path);
    put_row(out, head);
    for (size_t k = 0; k < traj.times.size(); ++k) {
        std::vector<std::string> row{csv_num(traj.times[k])};
        for (int i = 0; i < n; ++i) row.push_back(csv_num(traj.states[k][i]));
        put_row(out, row);
    }
}

void write_equilibrium_csv(const std::string& path, const Mechanism& m, const Vec& z_eq) {
    const int n = m.n_species();
    std::vector<std::string> head, row;
    for (int i = 0; i < n; ++i) {
        head.push_back("z_" + m.species[static_cast<size_t>(i)]);
        row.push_back(csv_num(z_eq[i]));
    }
    auto out = open_out(path);
    put_row(out, head);
    put_row(out, row);
}

}  // namespace simtrack
