#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "simtrack/csv.hpp"
#include "simtrack/log.hpp"

namespace fs = std::filesystem;
using namespace simtrack;

namespace {

// a --pin/--scan value: scalar, start:step:count, or [v1,v2,...]
struct AxisSpec {
    std::string name;
    std::vector<double> values;
    bool is_grid = false;
};

double parse_double(const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

AxisSpec parse_axis(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("expected NAME=VALUE in '" + arg + "'");
    AxisSpec spec;
    spec.name = arg.substr(0, eq);
    std::string rhs = arg.substr(eq + 1);
    if (rhs.empty()) throw std::invalid_argument("empty value in '" + arg + "'");

    if (rhs.front() == '[') {
        if (rhs.back() != ']') throw std::invalid_argument("unterminated list in '" + arg + "'");
        spec.is_grid = true;
        std::stringstream ss(rhs.substr(1, rhs.size() - 2));
        std::string item;
        while (std::getline(ss, item, ','))
            spec.values.push_back(parse_double(item));
        if (spec.values.empty()) throw std::invalid_argument("empty list in '" + arg + "'");
        return spec;
    }
    const auto c1 = rhs.find(':');
    if (c1 != std::string::npos) {
        const auto c2 = rhs.find(':', c1 + 1);
        if (c2 == std::string::npos)
            throw std::invalid_argument("grid spec needs start:step:count in '" + arg + "'");
        const double start = parse_double(rhs.substr(0, c1));
        const double step = parse_double(rhs.substr(c1 + 1, c2 - c1 - 1));
        const long count = std::stol(rhs.substr(c2 + 1));
        if (count < 1) throw std::invalid_argument("grid count must be >= 1 in '" + arg + "'");
        spec.is_grid = true;
        for (long i = 0; i < count; ++i)
            spec.values.push_back(start + static_cast<double>(i) * step);
        return spec;
    }
    spec.values.push_back(parse_double(rhs));
    return spec;
}

std::vector<AxisSpec> parse_pins(const std::vector<std::string>& args) {
    std::vector<AxisSpec> specs;
    for (const auto& a : args) {
        AxisSpec s = parse_axis(a);
        for (const auto& prev : specs)
            if (prev.name == s.name) throw std::invalid_argument("duplicate pin '" + s.name + "'");
        specs.push_back(std::move(s));
    }
    return specs;
}

int species_or_throw(const Mechanism& m, const std::string& name) {
    const int i = m.species_index(name);
    if (i < 0) throw std::invalid_argument("unknown species '" + name + "'");
    return i;
}

struct Options {
    std::string mechanism;
    std::string out_dir = ".";
    std::string corrector = "ggn";
    std::string predictor = "euler";
    std::string mode = "full";
    double eps_tol = 1.1;
    double h_init = 0.4;
    int k_desired = 10;
    double tol_abs = 1e-10;
    double tol_rel = 1e-9;
    bool scale = false;
    int jobs = 1;

    ContinuationConfig continuation() const {
        ContinuationConfig cfg;
        cfg.mode = mode == "adaptive" ? ContinMode::adaptive
                 : mode == "linear"   ? ContinMode::linear_step
                                      : ContinMode::full_step;
        cfg.eps_tol = eps_tol;
        cfg.predictor = predictor == "constant" ? PredictorKind::constant : PredictorKind::euler;
        cfg.corrector = corrector == "newton" ? CorrectorKind::newton_kkt : CorrectorKind::ggn;
        cfg.step.h = h_init;
        cfg.step.k_desired = k_desired;
        cfg.solver.tol_abs = tol_abs;
        cfg.solver.tol_rel = tol_rel;
        cfg.solver.scale = scale;
        return cfg;
    }
};

KktSolution run_solver(const NlpProblem& p, const Vec& x0, const Options& opt) {
    const ContinuationConfig cfg = opt.continuation();
    if (cfg.corrector == CorrectorKind::newton_kkt) {
        const Vec lam0 = Vec::Zero(p.cons.C.rows() + static_cast<Eigen::Index>(p.pins.indices.size()));
        return newton_kkt_solve(p, x0, lam0, cfg.solver);
    }
    return ggn_solve(p, x0, cfg.solver);
}

PathPoint anchor_point(const NlpProblem& p, const KktSolution& sol, const Vec& r) {
    PathPoint pp;
    pp.r = r;
    pp.solution = sol;
    pp.corrector_stats = {sol.iterations, sol.a0, sol.a1};
    SensitivityMatrix sens = kkt_sensitivities(p, sol);
    if (sens.reliable) pp.sens = sens;
    return pp;
}

// composition from --z overrides on top of the anchor, or from a prior CSV
Vec start_state(const Mechanism& m, const std::vector<std::string>& z_args,
                const std::string& from_csv) {
    Vec z = m.anchor;
    if (!from_csv.empty()) {
        std::ifstream in(from_csv);
        if (!in) throw std::invalid_argument("cannot read '" + from_csv + "'");
        std::string header, data;
        if (!std::getline(in, header) || !std::getline(in, data))
            throw std::invalid_argument("'" + from_csv + "' holds no data row");
        std::vector<std::string> names, cells;
        std::stringstream hs(header), ds(data);
        std::string tok;
        while (std::getline(hs, tok, ',')) names.push_back(tok);
        while (std::getline(ds, tok, ',')) cells.push_back(tok);
        for (int i = 0; i < m.n_species(); ++i) {
            const std::string a = "z_" + m.species[static_cast<size_t>(i)];
            const std::string b = a + "_mol_per_kg";
            bool found = false;
            for (size_t c = 0; c < names.size() && c < cells.size(); ++c)
                if (names[c] == a || names[c] == b) {
                    z[i] = parse_double(cells[c]);
                    found = true;
                    break;
                }
            if (!found)
                throw std::invalid_argument("'" + from_csv + "' lacks a column for " + a);
        }
    }
    for (const auto& arg : z_args) {
        const AxisSpec s = parse_axis(arg);
        if (s.is_grid || s.values.size() != 1)
            throw std::invalid_argument("--z expects NAME=VALUE, got '" + arg + "'");
        z[species_or_throw(m, s.name)] = s.values[0];
    }
    return z;
}

int cmd_solve(const Options& opt, const std::vector<std::string>& pin_args) {
    const Mechanism m = load_mechanism(opt.mechanism);
    NlpProblem p;
    p.mech = &m;
    p.cons = conservation_from_anchor(m, m.anchor);
    auto pins = parse_pins(pin_args);
    if (pins.empty()) throw std::invalid_argument("solve needs at least one --pin");
    for (auto& s : pins) {
        if (s.is_grid || s.values.size() != 1)
            throw std::invalid_argument("solve expects scalar pins, got a grid for '" + s.name +
                                        "'");
        p.pins.indices.push_back(species_or_throw(m, s.name));
    }
    p.pins.values.resize(static_cast<Eigen::Index>(pins.size()));
    for (size_t j = 0; j < pins.size(); ++j)
        p.pins.values[static_cast<Eigen::Index>(j)] = pins[j].values[0];

    const auto t0 = std::chrono::steady_clock::now();
    const KktSolution sol = run_solver(p, m.anchor, opt);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::optional<SensitivityMatrix> sens;
    if (solve_ok(sol.status)) sens = kkt_sensitivities(p, sol);
    fs::create_directories(opt.out_dir);
    write_point_csv((fs::path(opt.out_dir) / "point.csv").string(), p, sol,
                    sens ? &*sens : nullptr);

    std::cout << "status " << status_to_string(sol.status) << "\n"
              << "iterations " << sol.iterations << "\n"
              << "phi " << csv_num(objective_phi(m, sol.x)) << "\n"
              << "kkt_residual " << csv_num(sol.kkt_residual) << "\n"
              << "time_solve_s " << dt << "\n";
    if (!solve_ok(sol.status)) {
        std::cerr << "solve failed: " << status_to_string(sol.status) << "\n";
        return 1;
    }
    return 0;
}

int cmd_sweep(const Options& opt, const std::vector<std::string>& pin_args) {
    const Mechanism m = load_mechanism(opt.mechanism);
    NlpProblem p;
    p.mech = &m;
    p.cons = conservation_from_anchor(m, m.anchor);
    auto pins = parse_pins(pin_args);
    if (pins.empty() || pins.size() > 2)
        throw std::invalid_argument("sweep needs one or two --pin axes");

    std::vector<GridAxis> axes;
    Vec r_anchor(static_cast<Eigen::Index>(pins.size()));
    for (size_t k = 0; k < pins.size(); ++k) {
        GridAxis ax;
        ax.species = species_or_throw(m, pins[k].name);
        ax.values = pins[k].values;
        r_anchor[static_cast<Eigen::Index>(k)] = m.anchor[ax.species];
        axes.push_back(std::move(ax));
    }
    p.pins.indices.clear();
    for (const auto& ax : axes) p.pins.indices.push_back(ax.species);
    p.pins.values = r_anchor;

    const auto t0 = std::chrono::steady_clock::now();
    const KktSolution asol = run_solver(p, m.anchor, opt);
    if (!solve_ok(asol.status)) {
        std::cerr << "anchor solve failed: " << status_to_string(asol.status) << "\n";
        return 1;
    }
    const PathPoint anchor = anchor_point(p, asol, r_anchor);
    const SweepResult res = sweep_grid(p, anchor, axes, opt.continuation(), opt.jobs);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(opt.out_dir);
    write_sweep_csv((fs::path(opt.out_dir) / "sweep.csv").string(), m, axes, res);

    std::ofstream sum(fs::path(opt.out_dir) / "summary.txt");
    sum << "command sweep\n"
        << "mechanism " << opt.mechanism << "\n"
        << "mode " << opt.mode << "\n"
        << "predictor " << opt.predictor << "\n"
        << "corrector " << opt.corrector << "\n"
        << "jobs " << opt.jobs << "\n";
    for (size_t k = 0; k < axes.size(); ++k)
        sum << "axis_" << k << " " << m.species[static_cast<size_t>(axes[k].species)] << " "
            << axes[k].values.size() << "\n";
    sum << "rows " << res.rows.size() << "\n"
        << "converged " << res.n_converged << "\n"
        << "failed " << res.n_failed << "\n"
        << "skipped_infeasible " << res.n_skipped << "\n"
        << "linear " << res.n_linear << "\n"
        << "anchor_iterations " << asol.iterations << "\n"
        << "total_iterations " << res.total_iterations << "\n"
        << "total_iterations_all_attempts " << res.total_iterations_all << "\n"
        << "time_corrector_s " << res.corrector_seconds << "\n"
        << "time_predictor_s " << res.predictor_seconds << "\n"
        << "time_total_s " << dt << "\n";

    std::cout << "rows " << res.rows.size() << " converged " << res.n_converged << " failed "
              << res.n_failed << " skipped " << res.n_skipped << " linear " << res.n_linear
              << " iterations " << res.total_iterations << "\n";
    return res.n_converged > 0 ? 0 : 1;
}

int cmd_landscape(const Options& opt, const std::vector<std::string>& fix_args,
                  const std::vector<std::string>& scan_args) {
    const Mechanism m = load_mechanism(opt.mechanism);
    const ConservationSystem cons = conservation_from_anchor(m, m.anchor);
    if (scan_args.empty() || scan_args.size() > 2)
        throw std::invalid_argument("landscape needs one or two --scan axes");

    std::vector<std::pair<int, double>> fixed;
    for (const auto& a : fix_args) {
        const AxisSpec s = parse_axis(a);
        if (s.is_grid || s.values.size() != 1)
            throw std::invalid_argument("--fix expects NAME=VALUE, got '" + a + "'");
        fixed.emplace_back(species_or_throw(m, s.name), s.values[0]);
    }
    std::vector<int> scan_idx;
    std::vector<std::vector<double>> scan_vals;
    for (const auto& a : scan_args) {
        const AxisSpec s = parse_axis(a);
        scan_idx.push_back(species_or_throw(m, s.name));
        scan_vals.push_back(s.values);
    }

    const auto rows = landscape_scan(m, cons, fixed, scan_idx, scan_vals);
    fs::create_directories(opt.out_dir);
    write_landscape_csv((fs::path(opt.out_dir) / "landscape.csv").string(), m, scan_idx, rows);
    std::cout << "rows " << rows.size() << "\n";
    return 0;
}

int cmd_trajectory(const Options& opt, const std::vector<std::string>& z_args,
                   const std::string& from_csv, double t0, double tf, double tol) {
    const Mechanism m = load_mechanism(opt.mechanism);
    const Vec z0 = start_state(m, z_args, from_csv);
    const Trajectory traj = integrate(m, z0, t0, tf, tol);
    fs::create_directories(opt.out_dir);
    write_trajectory_csv((fs::path(opt.out_dir) / "trajectory.csv").string(), m, traj);
    std::cout << "steps " << traj.times.size() - 1 << " t_end " << csv_num(traj.times.back())
              << "\n";
    return 0;
}

int cmd_equilibrium(const Options& opt, const std::vector<std::string>& z_args,
                    const std::string& from_csv) {
    const Mechanism m = load_mechanism(opt.mechanism);
    const Vec z0 = start_state(m, z_args, from_csv);
    const ConservationSystem cons = conservation_from_anchor(m, z0);
    const Vec zeq = relax_to_equilibrium(m, cons, z0);
    fs::create_directories(opt.out_dir);
    write_equilibrium_csv((fs::path(opt.out_dir) / "equilibrium.csv").string(), m, zeq);
    for (int i = 0; i < m.n_species(); ++i)
        std::cout << "z_" << m.species[static_cast<size_t>(i)] << " " << csv_num(zeq[i]) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slow invariant manifold point tracker for chemical kinetics"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("-m,--mechanism", opt.mechanism, "mechanism file")->required();
    app.add_option("-o,--out-dir", opt.out_dir, "output directory");
    app.add_option("--corrector", opt.corrector, "corrector method")
        ->check(CLI::IsMember({"ggn", "newton"}));
    app.add_option("--predictor", opt.predictor, "continuation predictor")
        ->check(CLI::IsMember({"euler", "constant"}));
    app.add_option("--mode", opt.mode, "continuation mode")
        ->check(CLI::IsMember({"full", "adaptive", "linear"}));
    app.add_option("--eps-tol", opt.eps_tol, "linear-step radius");
    app.add_option("--h-init", opt.h_init, "initial continuation step fraction");
    app.add_option("--k-desired", opt.k_desired, "target corrector iterations");
    app.add_option("--tol-abs", opt.tol_abs, "absolute increment tolerance");
    app.add_option("--tol-rel", opt.tol_rel, "relative increment tolerance");
    app.add_flag("--scale", opt.scale, "scale variables by anchor magnitudes");
    app.add_option("--jobs", opt.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);

    std::vector<std::string> pin_args, fix_args, scan_args, z_args;
    std::string from_csv;
    double t0 = 0.0, tf = 1e-5, tol = 1e-8;

    auto* solve = app.add_subcommand("solve", "solve one pinned problem");
    solve->add_option("--pin", pin_args, "pinned species NAME=VALUE");
    auto* sweep = app.add_subcommand("sweep", "sweep a grid of pinned values");
    sweep->add_option("--pin", pin_args, "axis NAME=start:step:count or NAME=[v1,v2,...]");
    auto* landscape = app.add_subcommand("landscape", "objective scan over completed states");
    landscape->add_option("--fix", fix_args, "fixed coordinate NAME=VALUE");
    landscape->add_option("--scan", scan_args, "scan axis NAME=start:step:count");
    auto* trajectory = app.add_subcommand("trajectory", "integrate the kinetics");
    trajectory->add_option("--z", z_args, "override start composition NAME=VALUE");
    trajectory->add_option("--from-csv", from_csv, "start from a prior point/equilibrium CSV");
    trajectory->add_option("--t0", t0, "start time (s)");
    trajectory->add_option("--tf", tf, "final time (s)");
    trajectory->add_option("--tol", tol, "local error tolerance");
    auto* equilibrium = app.add_subcommand("equilibrium", "relax to the equilibrium");
    equilibrium->add_option("--z", z_args, "override start composition NAME=VALUE");
    equilibrium->add_option("--from-csv", from_csv, "start from a prior point/equilibrium CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (solve->parsed()) return cmd_solve(opt, pin_args);
        if (sweep->parsed()) return cmd_sweep(opt, pin_args);
        if (landscape->parsed()) return cmd_landscape(opt, fix_args, scan_args);
        if (trajectory->parsed()) return cmd_trajectory(opt, z_args, from_csv, t0, tf, tol);
        if (equilibrium->parsed()) return cmd_equilibrium(opt, z_args, from_csv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
