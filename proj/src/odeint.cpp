#include "simtrack/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "simtrack/log.hpp"

namespace simtrack {

namespace {

// weighted rms error norm with atol = rtol = tol
double wrms(const Vec& v, const Vec& y_scale, double tol) {
    double acc = 0.0;
    for (int i = 0; i < v.size(); ++i) {
        const double w = tol + tol * std::abs(y_scale[i]);
        const double q = v[i] / w;
        acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
}

// one implicit stage  y = base + c h S(y)  by simplified Newton with the
// Jacobian frozen at the step start; false on breakdown
bool implicit_stage(const Mechanism& m, const Vec& base, const Eigen::PartialPivLU<Mat>& lu,
                    double c, double h, double tol, int newton_max, Vec& y) {
    for (int it = 0; it < newton_max; ++it) {
        Vec g;
        try {
            g = y - base - c * h * source_term(m, y);
        } catch (const std::domain_error&) {
            return false;  // iterate left the admissible region
        }
        const Vec dy = lu.solve(-g);
        y += dy;
        if (!y.allFinite()) return false;
        if (wrms(dy, y, tol) < 0.03) return true;
    }
    return false;
}

}  // namespace

Trajectory integrate(const Mechanism& m, const Vec& z0, double t0, double tf, double tol,
                     const IntegrateOptions& opts) {
    const int n = m.n_species();
    if (z0.size() != n) throw std::invalid_argument("integrate: state size mismatch");
    if (z0.minCoeff() < -kNegativeSlack)
        throw std::invalid_argument("integrate: negative initial composition");
    if (!(tf >= t0) || !std::isfinite(tf) || !std::isfinite(t0))
        throw std::invalid_argument("integrate: bad time span");
    if (!(tol > 0.0)) throw std::invalid_argument("integrate: tolerance must be positive");

    Trajectory traj;
    traj.t0 = t0;
    traj.tf = tf;
    Vec y = z0.cwiseMax(0.0);
    traj.times.push_back(t0);
    traj.states.push_back(y);
    if (tf == t0) return traj;

    // element totals are exact invariants of the flow; project each accepted
    // state back onto them so drift stays at rounding level
    const Mat C = m.element_matrix.cast<double>();
    const Vec b0 = C * y;
    const Eigen::LLT<Mat> gram(Mat(C * C.transpose()));

    double t = t0;
    double h = opts.h_init;
    if (h <= 0.0) {
        const double d0 = y.cwiseAbs().maxCoeff();
        const double d1 = source_term(m, y).cwiseAbs().maxCoeff();
        h = d1 > 0.0 ? 0.01 * std::max(d0, 1.0) / d1 : 1e-9;
    }
    h = std::min(h, tf - t0);

    for (long step = 0; step < opts.max_steps && t < tf; ++step) {
        const bool last = h >= tf - t;
        h = std::min(h, tf - t);
        const Vec f0 = source_term(m, y);
        const Mat J = jacobian(m, y);
        const Eigen::PartialPivLU<Mat> lu_tr(Mat(Mat::Identity(n, n) - 0.5 * h * J));
        const Eigen::PartialPivLU<Mat> lu_be(Mat(Mat::Identity(n, n) - h * J));

        Vec y_tr = y + h * f0;  // explicit predictor for both stages
        Vec y_be = y_tr;
        const Vec base_tr = y + 0.5 * h * f0;
        bool ok = implicit_stage(m, base_tr, lu_tr, 0.5, h, tol, opts.newton_max, y_tr) &&
                  implicit_stage(m, y, lu_be, 1.0, h, tol, opts.newton_max, y_be) &&
                  y_tr.minCoeff() >= -1e-12;
        double err = ok ? wrms(y_tr - y_be, y_tr, tol) : 2.0;

        if (ok && err <= 1.0) {
            t = last ? tf : t + h;
            y = y_tr;
            y -= C.transpose() * gram.solve(C * y - b0);
            y = y.cwiseMax(0.0);
            if (opts.store_all) {
                traj.times.push_back(t);
                traj.states.push_back(y);
            }
            h *= std::clamp(0.9 * std::pow(err, -0.5), 0.2, 2.0);
        } else {
            h *= ok ? std::max(0.2, 0.9 * std::pow(err, -0.5)) : 0.5;
            if (h < opts.h_min) throw std::runtime_error("integrate: step size underflow");
        }
    }
    if (t < tf) throw std::runtime_error("integrate: step budget exhausted");

    if (!opts.store_all) {
        traj.times.push_back(t);
        traj.states.push_back(y);
    }
    return traj;
}

Vec relax_to_equilibrium(const Mechanism& m, const ConservationSystem& cons, const Vec& z0) {
    const int n = m.n_species();
    if (z0.size() != n) throw std::invalid_argument("relax_to_equilibrium: state size mismatch");
    if (cons.C.rows() > 0) {
        const Vec r = cons.C * z0 - cons.b;
        if (r.cwiseAbs().maxCoeff() > 1e-6 * std::max(1.0, cons.b.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("relax_to_equilibrium: z0 violates the conservation system");
    }

    Vec y = z0.cwiseMax(0.0);
    const double char_rate = std::max(source_term(m, y).cwiseAbs().maxCoeff(), 1.0);
    const double decay_target = 1e-10 * char_rate;

    IntegrateOptions opts;
    opts.store_all = false;
    double horizon = 1e-9;
    for (int chunk = 0; chunk < 60; ++chunk) {
        const Trajectory traj = integrate(m, y, 0.0, horizon, 1e-10, opts);
        y = traj.states.back();
        if (source_term(m, y).cwiseAbs().maxCoeff() < decay_target) break;
        horizon *= 2.0;
        if (chunk == 59)
            throw std::runtime_error("relax_to_equilibrium: source term did not decay");
    }

    // Newton polish on S(y0 + N q) = 0 with N spanning the null space of C,
    // damped on ||S||; the system is consistent, solved in least squares
    Mat N;
    if (cons.C.rows() > 0) {
        Eigen::FullPivLU<Mat> lu(cons.C);
        N = lu.kernel();
    } else {
        N = Mat::Identity(n, n);
    }
    double snorm = source_term(m, y).norm();
    for (int it = 0; it < 50 && snorm > 0.0; ++it) {
        const Vec S = source_term(m, y);
        const Mat JN = jacobian(m, y) * N;
        const Vec dq = Eigen::CompleteOrthogonalDecomposition<Mat>(JN).solve(-S);
        double tstep = 1.0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            const Vec y_try = (y + tstep * (N * dq)).cwiseMax(0.0);
            const double s_try = source_term(m, y_try).norm();
            if (s_try < snorm) {
                y = y_try;
                snorm = s_try;
                improved = true;
                break;
            }
            tstep *= 0.5;
        }
        if (!improved) break;  // rounding floor reached
    }
    return y;
}

}  // namespace simtrack
