#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "analyze.hpp"
#include "heuristics.hpp"
#include "integrate.hpp"
#include "pmp.hpp"
#include "types.hpp"

namespace descent {

/// Initial adjoint values and final time of a shooting run.
struct ShootingUnknowns
{
    Vec3 p_r0 = Vec3::Zero();
    Vec3 p_v0 = Vec3::Zero();
    double p_m0 = 0.0;
    double t_f = 0.0;
};

/// Scaled boundary residuals; one entry per unknown.
struct ShootingResiduals
{
    Eigen::VectorXd values;
    std::vector<std::string> names;

    double max_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

struct ShootResult
{
    ShootingResiduals residuals;
    ExtremalRun run;
};

struct IndirectOptions
{
    ExtremalOptions extremal;
    int max_iterations = 200;
    double tolerance = 1e-8;
    double fd_step = 1e-6;
    /// Seed for the randomized restarts after the deterministic guesses fail.
    unsigned seed = 0;
    int random_restarts = 24;
    double contact_tol = kDefaultContactTol;
};

struct IndirectResult
{
    Trajectory trajectory;
    StructureReport report;
    ShootingUnknowns unknowns;
    ShootingResiduals residuals;
    int iterations = 0;
    int attempts = 0;
};

/// Adjoint of the fuel integral: p0 for the integral cost, 0 for Mayer costs.
inline double fuel_adjoint(Cost cost) { return cost == Cost::min_fuel ? -1.0 : 0.0; }

/// Required p_m(t_f) = p0 * d(cost)/dm.
inline double final_mass_adjoint(Cost cost) { return cost == Cost::max_final_mass ? 1.0 : 0.0; }

/// Required max_w H(t_f) = -p0 * d(cost)/dt_f.
inline double final_hamiltonian(Cost cost) { return cost == Cost::min_time ? 1.0 : 0.0; }

namespace detail {

/// Unknown and residual scales so that Newton sees O(1) quantities.
struct ShootingScales
{
    double p_r = 1.0, p_v = 1.0, p_m = 1.0, t_f = 1.0;
    double length = 1.0, speed = 1.0, hamiltonian = 1.0;

    explicit ShootingScales(const Scenario &sc)
    {
        const auto &p = sc.params;
        const double m0 = sc.initial.mass;
        const double kappa = sc.cost == Cost::max_final_mass ? p.flow_rate : 1.0;
        t_f = sc.final_time.value_or(gravity_turn_time(sc));
        p_v = kappa * m0 / p.thrust_max;
        p_r = p_v / t_f;
        p_m = sc.cost == Cost::max_final_mass ? 1.0 : t_f / m0;
        length = std::max((sc.initial.position - sc.target_position()).norm(), 1.0);
        speed = std::max((sc.initial.velocity - sc.final_velocity).norm(), 1.0);
        hamiltonian = kappa;
    }
};

inline bool free_final_time(const Scenario &sc) { return !sc.final_time.has_value(); }

inline Eigen::VectorXd to_scaled(const ShootingUnknowns &u, const ShootingScales &s, bool free_tf)
{
    Eigen::VectorXd z(free_tf ? 8 : 7);
    z.head<3>() = u.p_r0 / s.p_r;
    z.segment<3>(3) = u.p_v0 / s.p_v;
    z[6] = u.p_m0 / s.p_m;
    if (free_tf)
        z[7] = u.t_f / s.t_f;
    return z;
}

inline ShootingUnknowns from_scaled(const Eigen::VectorXd &z, const ShootingScales &s, const Scenario &sc)
{
    ShootingUnknowns u;
    u.p_r0 = z.head<3>() * s.p_r;
    u.p_v0 = z.segment<3>(3) * s.p_v;
    u.p_m0 = z[6] * s.p_m;
    u.t_f = z.size() > 7 ? z[7] * s.t_f : *sc.final_time;
    return u;
}

} // namespace detail

inline Costate initial_costate(const ShootingUnknowns &u, Cost cost)
{
    Costate p;
    p.p_r = u.p_r0;
    p.p_v = u.p_v0;
    p.p_m = u.p_m0;
    p.p0 = -1.0;
    p.p_fuel = fuel_adjoint(cost);
    return p;
}

/// Integrates the extremal from the unknowns and evaluates the boundary residuals.
inline ShootResult shoot(const Scenario &sc, const ShootingUnknowns &u, const ExtremalOptions &opt = {})
{
    const detail::ShootingScales s(sc);
    ShootResult out;
    out.run = integrate_extremal(sc, initial_costate(u, sc.cost), u.t_f, opt);
    const Trajectory &traj = out.run.trajectory;
    const State &xf = traj.states.back();
    const Costate &pf = traj.costates->back();

    std::vector<double> r;
    auto &names = out.residuals.names;
    auto add = [&](const char *name, double value) {
        names.emplace_back(name);
        r.push_back(value);
    };
    if (sc.pinpoint()) {
        const Vec3 dr = (xf.position - sc.target_position()) / s.length;
        const Vec3 dv = (xf.velocity - sc.final_velocity) / s.speed;
        add("x", dr.x());
        add("y", dr.y());
        add("z", dr.z());
        add("vx", dv.x());
        add("vy", dv.y());
        add("vz", dv.z());
    } else {
        add("z", xf.position.z() / s.length);
        add("vz", (xf.velocity.z() - sc.final_velocity.z()) / s.speed);
        add("p_rx", pf.p_r.x() / s.p_r);
        add("p_ry", pf.p_r.y() / s.p_r);
        add("p_vx", pf.p_v.x() / s.p_v);
        add("p_vy", pf.p_v.y() / s.p_v);
    }
    add("p_m", (pf.p_m - final_mass_adjoint(sc.cost)) / s.p_m);
    if (detail::free_final_time(sc)) {
        const ControlDecision best = control_law(xf, pf, sc.constraints, sc.params, 0.0);
        add("H", (hamiltonian(xf, pf, best.control, sc.params) - final_hamiltonian(sc.cost)) / s.hamiltonian);
    }
    out.residuals.values = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
    return out;
}

/// Deterministic guesses from the minimum-energy profile a(t) = c0 + c1 t, whose
/// primer vector is linear in time like p_v; scaled so that Psi averages zero.
inline std::vector<ShootingUnknowns> heuristic_guesses(const Scenario &sc)
{
    const auto &p = sc.params;
    const double m0 = sc.initial.mass;
    const double t_h = gravity_turn_time(sc);
    const double kappa = sc.cost == Cost::max_final_mass ? p.flow_rate : 1.0;
    std::vector<ShootingUnknowns> out;

    ShootingUnknowns plain;
    const double vn = sc.initial.velocity.norm();
    plain.p_v0 = (vn > 0 ? Vec3(-sc.initial.velocity / vn) : Vec3::UnitZ()) * kappa * m0 / p.thrust_max;
    plain.p_m0 = final_mass_adjoint(sc.cost);
    plain.t_f = sc.final_time.value_or(t_h);

    const std::vector<double> tf_factors = sc.final_time ? std::vector<double>{1.0}
                                                         : std::vector<double>{1.0, 0.9, 1.15, 0.8, 1.3};
    for (double f : tf_factors) {
        const double tf = sc.final_time.value_or(f * t_h);
        const auto [c0, c1] = min_energy_profile(sc, tf);
        double mean = 0.0;
        for (int k = 0; k <= 20; ++k)
            mean += (c0 + c1 * (tf * k / 20.0)).norm() / 21.0;
        if (!(mean > 0.0))
            continue;
        for (double g : {1.0, 0.9, 1.1}) {
            const double lambda = g * kappa * m0 / (p.thrust_max * mean);
            ShootingUnknowns u;
            u.p_v0 = lambda * c0;
            u.p_r0 = -lambda * c1;
            u.p_m0 = final_mass_adjoint(sc.cost);
            u.t_f = tf;
            out.push_back(u);
        }
    }
    out.push_back(plain);
    return out;
}

/// Guess from a trajectory that already has the bang-bang structure (for
/// example a direct solution): on a switch Psi = 0 fixes |p_v| along the thrust
/// direction, and two switches determine the affine p_v(t) = p_v0 - p_r t.
inline std::optional<ShootingUnknowns> guess_from_switches(const Scenario &sc, const Trajectory &traj,
                                                         const std::vector<double> &switch_times)
{
    if (switch_times.size() < 2 || traj.size() < 2)
        return std::nullopt;
    const auto &p = sc.params;
    const double kappa = sc.cost == Cost::max_final_mass ? p.flow_rate : 1.0;
    auto sample = [&](double t) {
        const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t);
        std::size_t k = std::min<std::size_t>(it - traj.times.begin(), traj.size() - 1);
        return std::pair{traj.controls[k].direction, traj.states[k].mass};
    };
    const double t1 = switch_times.front(), t2 = switch_times.back();
    if (!(t2 > t1))
        return std::nullopt;
    const auto [d1, m1] = sample(t1);
    const auto [d2, m2] = sample(t2);
    const Vec3 pv1 = d1 * kappa * m1 / p.thrust_max, pv2 = d2 * kappa * m2 / p.thrust_max;
    ShootingUnknowns u;
    u.p_r0 = -(pv2 - pv1) / (t2 - t1);
    u.p_v0 = pv1 + u.p_r0 * t1;
    u.p_m0 = final_mass_adjoint(sc.cost);
    u.t_f = traj.final_time();
    return u;
}

namespace detail {

struct NewtonOutcome
{
    bool converged = false;
    Eigen::VectorXd z;
    double norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::optional<SolverError> error;
};

/// Damped Newton on the scaled residuals with a central-difference Jacobian and a
/// Levenberg-Marquardt step when the Newton direction does not reduce the residual.
inline NewtonOutcome newton(const Scenario &sc, const ShootingScales &s, Eigen::VectorXd z,
                            const IndirectOptions &opt)
{
    NewtonOutcome out;
    auto eval = [&](const Eigen::VectorXd &zz) -> std::optional<Eigen::VectorXd> {
        const ShootingUnknowns u = from_scaled(zz, s, sc);
        if (!(u.t_f > 0.0))
            return std::nullopt;
        try {
            Eigen::VectorXd f = shoot(sc, u, opt.extremal).residuals.values;
            if (!f.allFinite())
                return std::nullopt;
            return f;
        } catch (const SolverError &e) {
            out.error = e;
            return std::nullopt;
        }
    };

    std::optional<Eigen::VectorXd> f = eval(z);
    if (!f)
        return out;
    const Eigen::Index n = z.size();
    double lambda = 1e-3;
    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it;
        out.z = z;
        out.norm = f->cwiseAbs().maxCoeff();
        if (out.norm <= opt.tolerance) {
            out.converged = true;
            out.error.reset();
            return out;
        }
        Eigen::MatrixXd J(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double step = opt.fd_step * std::max(1.0, std::abs(z[j]));
            Eigen::VectorXd zp = z, zm = z;
            zp[j] += step;
            zm[j] -= step;
            const auto fp = eval(zp), fm = eval(zm);
            if (!fp || !fm)
                return out;
            J.col(j) = (*fp - *fm) / (2.0 * step);
        }
        if (!J.allFinite())
            return out;

        const double f2 = f->squaredNorm();
        bool accepted = false;
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
        if (qr.rank() == n) {
            const Eigen::VectorXd dz = qr.solve(-*f);
            for (double alpha = 1.0; alpha >= 1.0 / 1024; alpha *= 0.5) {
                const Eigen::VectorXd trial = z + alpha * dz;
                const auto ft = eval(trial);
                if (ft && ft->squaredNorm() < (1.0 - 1e-4 * alpha) * f2) {
                    z = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            const Eigen::MatrixXd JtJ = J.transpose() * J;
            const Eigen::VectorXd g = J.transpose() * *f;
            for (int tries = 0; tries < 12 && !accepted; ++tries, lambda *= 10.0) {
                Eigen::MatrixXd A = JtJ;
                A.diagonal() += lambda * (JtJ.diagonal().array() + 1e-12).matrix();
                const Eigen::VectorXd dz = A.ldlt().solve(-g);
                const Eigen::VectorXd trial = z + dz;
                const auto ft = eval(trial);
                if (ft && ft->squaredNorm() < f2) {
                    z = trial;
                    f = ft;
                    accepted = true;
                    lambda = std::max(lambda / 100.0, 1e-9);
                }
            }
        }
        if (!accepted)
            return out;
    }
    out.z = z;
    out.norm = f->cwiseAbs().maxCoeff();
    out.converged = out.norm <= opt.tolerance;
    out.iterations = opt.max_iterations;
    return out;
}

} // namespace detail

/// Single shooting on the boundary conditions of the maximum principle.
///
/// Guesses are tried in order: the caller's guess, the deterministic heuristics,
/// then seeded random perturbations of the best attempt so far. The first
/// converged extremal is returned with its structure report.
inline IndirectResult solve_indirect(const Scenario &sc, const std::optional<ShootingUnknowns> &initial_guess = {},
                                     const IndirectOptions &opt = {})
{
    sc.validate();
    const detail::ShootingScales s(sc);
    const bool free_tf = detail::free_final_time(sc);

    std::vector<ShootingUnknowns> guesses;
    if (initial_guess) {
        if (!(initial_guess->t_f > 0.0))
            throw InvalidInput("initial guess: t_f must be > 0");
        guesses.push_back(*initial_guess);
    }
    for (const auto &g : heuristic_guesses(sc))
        guesses.push_back(g);

    detail::NewtonOutcome best;
    std::optional<SolverError> last_error;
    int attempts = 0;
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int total = static_cast<int>(guesses.size()) + opt.random_restarts;

    auto finish = [&](const detail::NewtonOutcome &o) {
        IndirectResult res;
        res.unknowns = detail::from_scaled(o.z, s, sc);
        ShootResult shot = shoot(sc, res.unknowns, opt.extremal);
        res.residuals = shot.residuals;
        res.trajectory = std::move(shot.run.trajectory);
        res.iterations = o.iterations;
        res.attempts = attempts;
        if (sc.constraints.glide_slope_enabled) {
            double worst = 0.0;
            for (const auto &d : res.trajectory.diagnostics)
                worst = std::min(worst, *d.h);
            if (worst < -opt.contact_tol)
                throw SolverError(Failure::constraint_active,
                                  "extremal violates the glide slope (min h = " + std::to_string(worst) + " m)");
        }
        AnalysisOptions aopt;
        aopt.h_tol = opt.contact_tol;
        res.report = analyze(res.trajectory, sc, aopt, shot.run.switch_times);
        return res;
    };

    for (int a = 0; a < total; ++a) {
        Eigen::VectorXd z;
        if (a < static_cast<int>(guesses.size())) {
            z = detail::to_scaled(guesses[a], s, free_tf);
        } else {
            z = best.z.size() ? best.z : detail::to_scaled(guesses.front(), s, free_tf);
            const double spread = 0.1 + 0.5 * ((a - guesses.size()) % 4) / 3.0;
            for (Eigen::Index i = 0; i < z.size(); ++i)
                z[i] *= 1.0 + spread * normal(rng);
            if (free_tf)
                z[z.size() - 1] = std::abs(z[z.size() - 1]);
        }
        ++attempts;
        detail::NewtonOutcome o = detail::newton(sc, s, z, opt);
        if (o.converged)
            return finish(o);
        if (o.error)
            last_error = o.error;
        if (o.z.size() && o.norm < best.norm)
            best = o;
    }
    if (last_error && last_error->kind() == Failure::singular_arc)
        throw *last_error;
    if (best.z.size() && best.iterations >= opt.max_iterations)
        throw SolverError(Failure::max_iterations, "shooting residual " + std::to_string(best.norm) + " after " +
                                                       std::to_string(attempts) + " attempts");
    throw SolverError(Failure::divergence, "no shooting attempt converged (best residual " +
                                               std::to_string(best.norm) + ", " + std::to_string(attempts) +
                                               " attempts)");
}

} // namespace descent
