#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "model.hpp"
#include "pmp.hpp"
#include "types.hpp"

namespace descent {

/// Classical four-stage Runge-Kutta update of y' = rhs(t, y).
template <class Vector, class Rhs>
Vector rk4_step(Rhs &&rhs, const Vector &y, double t, double dt)
{
    if (!(dt > 0.0))
        throw InvalidInput("rk4_step: dt must be positive");
    auto check = [](const Vector &v) {
        if (!v.allFinite())
            throw SolverError(Failure::non_finite, "rk4 stage produced non-finite values");
        return v;
    };
    const Vector k1 = check(rhs(t, y));
    const Vector k2 = check(rhs(t + 0.5 * dt, Vector(y + 0.5 * dt * k1)));
    const Vector k3 = check(rhs(t + 0.5 * dt, Vector(y + 0.5 * dt * k2)));
    const Vector k4 = check(rhs(t + dt, Vector(y + dt * k3)));
    return check(Vector(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)));
}

struct NodeDiagnostics
{
    std::optional<double> h;
    std::optional<double> psi;
    std::optional<double> qr_dot_d;
    std::optional<double> pointing_slack;
};

/// Time history of a solution. Values are not modified after a solver returns it.
struct Trajectory
{
    std::vector<double> times;
    std::vector<State> states;
    std::vector<Control> controls;
    std::optional<std::vector<Costate>> costates;
    std::vector<NodeDiagnostics> diagnostics;
    /// Per-node glide-slope multipliers (direct transcription only).
    std::vector<double> constraint_multipliers;
    /// Integral of |u| dt, consistent with the integration scheme.
    double fuel_integral = 0.0;
    double cost_value = 0.0;
    Model model = Model::vacuum;

    std::size_t size() const { return times.size(); }
    double final_time() const { return times.empty() ? 0.0 : times.back(); }
    bool has_costates() const { return costates.has_value(); }
};

/// l(t_f, X(t_f)) for the scenario's cost: fuel integral, -m(t_f) or t_f.
inline double evaluate_cost(Cost cost, const Trajectory &traj)
{
    switch (cost) {
    case Cost::min_fuel: return traj.fuel_integral;
    case Cost::max_final_mass: return -traj.states.back().mass;
    case Cost::min_time: return traj.final_time();
    }
    return 0.0;
}

/// Recomputes h, Psi, <q_r,d> and pointing slack at every node.
inline void fill_diagnostics(Trajectory &traj, const Scenario &sc)
{
    const auto &c = sc.constraints;
    traj.diagnostics.assign(traj.size(), NodeDiagnostics{});
    for (std::size_t k = 0; k < traj.size(); ++k) {
        auto &diag = traj.diagnostics[k];
        if (c.glide_slope_enabled)
            diag.h = glide_slope_value(traj.states[k].position, c.glide_slope_angle);
        if (c.pointing_enabled)
            diag.pointing_slack = pointing_slack(traj.controls[k].direction, c.pointing_half_angle);
        if (traj.costates) {
            const Costate &p = (*traj.costates)[k];
            const Vec3 &d = traj.controls[k].direction;
            diag.psi = switching_function(traj.states[k], p, d, sc.params);
            diag.qr_dot_d = qr_dot_d(p, d);
        }
    }
}

/// |m(t_f) - m0 + q * integral |u| dt|.
inline double mass_bookkeeping_error(const Trajectory &traj, const VehicleParams &p)
{
    return std::abs(traj.states.back().mass - traj.states.front().mass + p.flow_rate * traj.fuel_integral);
}

using ControlPolicy = std::function<Control(double t, const State &x, const Costate *p)>;

namespace detail {

// Augmented layout: r(3) v(3) m p_r(3) p_v(3) p_m fuel.
using Augmented = Eigen::Matrix<double, 15, 1>;

inline Augmented pack(const State &x, const Costate &p, double fuel)
{
    Augmented y;
    y << x.position, x.velocity, x.mass, p.p_r, p.p_v, p.p_m, fuel;
    return y;
}

inline State unpack_state(const Augmented &y) { return {y.head<3>(), y.segment<3>(3), y[6]}; }

inline Costate unpack_costate(const Augmented &y, const Costate &proto)
{
    Costate p = proto;
    p.p_r = y.segment<3>(7);
    p.p_v = y.segment<3>(10);
    p.p_m = y[13];
    return p;
}

inline Augmented augmented_rhs(const State &x, const Costate *p, const Control &u, const VehicleParams &params)
{
    if (!(x.mass > params.mass_empty))
        throw SolverError(Failure::fuel_exhausted, "mass reached mass_empty before t_f");
    Augmented dy = Augmented::Zero();
    dy.head<7>() = eval_dynamics(x, u, params);
    if (p) {
        const CostateRate dp = adjoint_rhs(x, *p, u, params);
        dy.segment<3>(7) = dp.p_r;
        dy.segment<3>(10) = dp.p_v;
        dy[13] = dp.p_m;
    }
    dy[14] = u.throttle;
    return dy;
}

} // namespace detail

/// Fixed-step RK4 propagation under a feedback policy. When an initial costate is
/// given it is carried along with the adjoint dynamics and passed to the policy.
inline Trajectory propagate(const Scenario &sc, const ControlPolicy &policy, double t_f, int n_steps,
                            const std::optional<Costate> &costate0 = std::nullopt)
{
    if (n_steps < 10)
        throw InvalidInput("propagate: n_steps must be >= 10");
    if (!(t_f > 0.0))
        throw InvalidInput("propagate: t_f must be positive");
    const auto &params = sc.params;
    const Costate proto = costate0.value_or(Costate{});
    const bool with_costate = costate0.has_value();

    auto rhs = [&](double t, const detail::Augmented &y) {
        const State x = detail::unpack_state(y);
        const Costate p = detail::unpack_costate(y, proto);
        const Costate *pp = with_costate ? &p : nullptr;
        const Control u = policy(t, x, pp);
        return detail::augmented_rhs(x, pp, u, params);
    };

    Trajectory traj;
    traj.model = sc.model();
    if (with_costate)
        traj.costates.emplace();
    auto record = [&](double t, const detail::Augmented &y) {
        const State x = detail::unpack_state(y);
        const Costate p = detail::unpack_costate(y, proto);
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.controls.push_back(policy(t, x, with_costate ? &p : nullptr));
        if (with_costate)
            traj.costates->push_back(p);
    };

    detail::Augmented y = detail::pack(sc.initial, proto, 0.0);
    const double h = t_f / n_steps;
    record(0.0, y);
    for (int k = 0; k < n_steps; ++k) {
        const double t = k * h;
        const double t_next = (k + 1 == n_steps) ? t_f : (k + 1) * h;
        y = rk4_step(rhs, y, t, t_next - t);
        if (k + 1 < n_steps && !(y[6] > params.mass_empty))
            throw SolverError(Failure::fuel_exhausted, "mass reached mass_empty at t=" + std::to_string(t_next));
        record(t_next, y);
    }
    traj.fuel_integral = y[14];
    traj.cost_value = evaluate_cost(sc.cost, traj);
    fill_diagnostics(traj, sc);
    return traj;
}

struct ExtremalOptions
{
    int n_steps = 400;
    double singular_tol = 0.0; // <= 0 selects default_singular_tol
    int max_switches = 16;
};

/// Output of an extremal integration: the trajectory plus its event data.
struct ExtremalRun
{
    Trajectory trajectory;
    std::vector<double> switch_times;
    /// Nodes whose direction fell in the degenerate (tie) branch.
    std::vector<double> degenerate_times;
};

/// Integrates state and costate with the control of the maximum principle.
///
/// Each bang arc is integrated on its own: when Psi changes sign inside a step the
/// crossing time is located on the RK4 dense step and becomes a grid node, so the
/// throttle is constant on every integration step. A run of more than two
/// consecutive nodes with |Psi| <= singular_tol raises a singular-arc error.
inline ExtremalRun integrate_extremal(const Scenario &sc, const Costate &costate0, double t_f,
                                      const ExtremalOptions &opt = {})
{
    if (!(t_f > 0.0) || !std::isfinite(t_f))
        throw SolverError(Failure::non_finite, "final time must be positive and finite");
    if (opt.n_steps < 10)
        throw InvalidInput("integrate_extremal: n_steps must be >= 10");
    const auto &params = sc.params;
    const auto &cons = sc.constraints;
    const double tol = opt.singular_tol > 0.0 ? opt.singular_tol
                                               : default_singular_tol(params, sc.initial.mass);

    auto rhs_at = [&](double throttle) {
        return [&, throttle](double, const detail::Augmented &y) {
            const State x = detail::unpack_state(y);
            const Costate p = detail::unpack_costate(y, costate0);
            const DirectionResult dir = direction_law(p.p_v, cons.pointing_half_angle, cons.pointing_enabled);
            return detail::augmented_rhs(x, &p, Control{dir.d, throttle}, params);
        };
    };
    auto psi_of = [&](const detail::Augmented &y, DirectionResult *dir_out = nullptr) {
        const State x = detail::unpack_state(y);
        const Costate p = detail::unpack_costate(y, costate0);
        const DirectionResult dir = direction_law(p.p_v, cons.pointing_half_angle, cons.pointing_enabled);
        if (dir_out)
            *dir_out = dir;
        return switching_function(x, p, dir.d, params);
    };

    ExtremalRun run;
    Trajectory &traj = run.trajectory;
    traj.model = sc.model();
    traj.costates.emplace();

    auto record = [&](double t, const detail::Augmented &y, double throttle) {
        DirectionResult dir;
        psi_of(y, &dir);
        traj.times.push_back(t);
        traj.states.push_back(detail::unpack_state(y));
        traj.costates->push_back(detail::unpack_costate(y, costate0));
        traj.controls.push_back(Control{dir.d, throttle});
        if (dir.branch == DirectionBranch::degenerate_tie)
            run.degenerate_times.push_back(t);
    };

    detail::Augmented y = detail::pack(sc.initial, costate0, 0.0);
    double psi = psi_of(y);
    bool at_max;
    if (std::abs(psi) > tol) {
        at_max = psi > 0.0;
    } else {
        const State x0 = detail::unpack_state(y);
        const DirectionResult dir = direction_law(costate0.p_v, cons.pointing_half_angle, cons.pointing_enabled);
        at_max = switching_rate(x0, costate0, dir.d, params) > 0.0;
    }
    auto throttle_of = [&](bool max) { return max ? params.throttle_max : params.throttle_min; };

    const double h = t_f / opt.n_steps;
    double t = 0.0;
    int k = 0;
    int singular_run = 0;
    record(t, y, throttle_of(at_max));
    while (k < opt.n_steps) {
        const double t_next = (k + 1 == opt.n_steps) ? t_f : (k + 1) * h;
        const double dt = t_next - t;
        const auto rhs = rhs_at(throttle_of(at_max));
        detail::Augmented y_next = rk4_step(rhs, y, t, dt);
        const double psi_next = psi_of(y_next);
        const bool crossed = at_max ? psi_next < 0.0 : psi_next > 0.0;
        if (crossed && dt > 1e-9 * h) {
            // Illinois regula falsi on the step length.
            double a = 0.0, fa = psi, b = dt, fb = psi_next;
            int side = 0;
            for (int it = 0; it < 200 && b - a > 1e-15 * h; ++it) {
                const double s = (a * fb - b * fa) / (fb - fa);
                const double fs = psi_of(rk4_step(rhs, y, t, s));
                if (fs == 0.0) {
                    a = b = s;
                    break;
                }
                if ((fs > 0.0) == (fa > 0.0)) {
                    a = s;
                    fa = fs;
                    if (side == -1)
                        fb *= 0.5;
                    side = -1;
                } else {
                    b = s;
                    fb = fs;
                    if (side == 1)
                        fa *= 0.5;
                    side = 1;
                }
            }
            const double s = b;
            if (dt - s > 1e-9 * h) {
                y = rk4_step(rhs, y, t, s);
                t += s;
                at_max = !at_max;
                psi = psi_of(y);
                run.switch_times.push_back(t);
                if (static_cast<int>(run.switch_times.size()) > opt.max_switches)
                    throw SolverError(Failure::singular_arc, "switching function chatters (more than " +
                                                                 std::to_string(opt.max_switches) + " switches)");
                record(t, y, throttle_of(at_max));
                singular_run = 0;
                continue;
            }
            // Crossing at the step end: finish the step, switch on the node.
            at_max = !at_max;
            run.switch_times.push_back(t_next);
        }
        y = y_next;
        t = t_next;
        psi = psi_next;
        ++k;
        if (k < opt.n_steps && !(y[6] > params.mass_empty))
            throw SolverError(Failure::fuel_exhausted, "mass reached mass_empty at t=" + std::to_string(t));
        record(t, y, throttle_of(at_max));
        singular_run = std::abs(psi) <= tol ? singular_run + 1 : 0;
        if (singular_run > 2)
            throw SolverError(Failure::singular_arc, "|Psi| <= " + std::to_string(tol) + " near t=" +
                                                         std::to_string(t));
    }
    traj.fuel_integral = y[14];
    traj.cost_value = evaluate_cost(sc.cost, traj);
    fill_diagnostics(traj, sc);
    return run;
}

} // namespace descent
