#pragma once

#include <cmath>

#include "model.hpp"
#include "types.hpp"

namespace descent {

/// Adjoint vector of the maximum principle.
///
/// mu_accum holds the running integral of n dmu, so that the measure-adjusted
/// adjoint is q_r = p_r - mu_accum. p_fuel is the (constant) adjoint of the
/// fuel-integral state used when the cost is the integral of |u|; it equals p0
/// for that cost and 0 otherwise.
struct Costate
{
    Vec3 p_r = Vec3::Zero();
    Vec3 p_v = Vec3::Zero();
    double p_m = 0.0;
    double p0 = -1.0;
    Vec3 mu_accum = Vec3::Zero();
    double p_fuel = 0.0;

    Vec3 q_r() const { return p_r - mu_accum; }

    /// (P, p0, mu) must not vanish simultaneously.
    bool nontrivial() const
    {
        return p0 != 0.0 || !p_r.isZero(0.0) || !p_v.isZero(0.0) || p_m != 0.0 || !mu_accum.isZero(0.0);
    }
};

struct CostateRate
{
    Vec3 p_r = Vec3::Zero();
    Vec3 p_v = Vec3::Zero();
    double p_m = 0.0;
};

enum class DirectionBranch
{
    interior,
    cone_boundary,
    degenerate_tie,
};

inline const char *to_string(DirectionBranch b)
{
    switch (b) {
    case DirectionBranch::interior: return "interior";
    case DirectionBranch::cone_boundary: return "cone_boundary";
    case DirectionBranch::degenerate_tie: return "degenerate_tie";
    }
    return "?";
}

struct DirectionResult
{
    Vec3 d = Vec3::UnitZ();
    DirectionBranch branch = DirectionBranch::interior;
    double pv_norm = 0.0;
};

/// Maximizer of <p_v, d> over unit vectors d in the pointing cone.
///
/// Interior branch returns p_v/|p_v|; when the cone binds the horizontal part of
/// p_v is kept and the elevation is clamped to the cone boundary. Ties (p_v on
/// the downward axis, or p_v = 0) resolve to delta = (1, 0) on the boundary, or
/// e_z when the whole sphere ties.
inline DirectionResult direction_law(const Vec3 &p_v, double theta, bool pointing_enabled)
{
    DirectionResult out;
    out.pv_norm = p_v.norm();
    if (out.pv_norm == 0.0) {
        out.branch = DirectionBranch::degenerate_tie;
        out.d = Vec3::UnitZ();
        return out;
    }
    if (!pointing_enabled || p_v.z() >= out.pv_norm * std::cos(theta)) {
        out.branch = DirectionBranch::interior;
        out.d = p_v / out.pv_norm;
        return out;
    }
    const double horizontal = p_v.head<2>().norm();
    const double s = std::sin(theta), c = std::cos(theta);
    if (horizontal <= 1e-12 * out.pv_norm) {
        out.branch = DirectionBranch::degenerate_tie;
        out.d << s, 0.0, c;
        return out;
    }
    out.branch = DirectionBranch::cone_boundary;
    out.d << s * p_v.x() / horizontal, s * p_v.y() / horizontal, c;
    return out;
}

/// Psi = (T/m)<p_v, d> - p_m q + p_fuel. Its sign selects the throttle bound.
inline double switching_function(const State &x, const Costate &p, const Vec3 &d, const VehicleParams &params)
{
    return params.thrust_max / x.mass * p.p_v.dot(d) - p.p_m * params.flow_rate + p.p_fuel;
}

enum class ArcHint
{
    max,
    min,
    singular,
};

struct ControlDecision
{
    Control control;
    ArcHint hint = ArcHint::max;
    double psi = 0.0;
    DirectionResult direction;
};

/// Default singular threshold, scaled to the natural magnitude T/m0 of Psi.
inline double default_singular_tol(const VehicleParams &p, double initial_mass)
{
    return 1e-9 * p.thrust_max / initial_mass;
}

/// Pointwise maximizer of the Hamiltonian. |Psi| <= singular_tol is reported as
/// a singular hint with throttle_min as placeholder; callers must escalate.
inline ControlDecision control_law(const State &x, const Costate &p, const ConstraintSet &c,
                                   const VehicleParams &params, double singular_tol)
{
    ControlDecision out;
    out.direction = direction_law(p.p_v, c.pointing_half_angle, c.pointing_enabled);
    out.psi = switching_function(x, p, out.direction.d, params);
    out.control.direction = out.direction.d;
    if (out.psi > singular_tol) {
        out.hint = ArcHint::max;
        out.control.throttle = params.throttle_max;
    } else if (out.psi < -singular_tol) {
        out.hint = ArcHint::min;
        out.control.throttle = params.throttle_min;
    } else {
        out.hint = ArcHint::singular;
        out.control.throttle = params.throttle_min;
    }
    return out;
}

/// H = <q_r, v> + <p_v, (T - sigma/|u|) u/m - g> - p_m q |u| + p_fuel |u|.
inline double hamiltonian(const State &x, const Costate &p, const Control &u, const VehicleParams &params)
{
    const double net_thrust = params.thrust_max * u.throttle - params.pressure_term;
    const Vec3 accel = (net_thrust / x.mass) * u.direction - params.gravity_vector();
    return p.q_r().dot(x.velocity) + p.p_v.dot(accel) - p.p_m * params.flow_rate * u.throttle +
           p.p_fuel * u.throttle;
}

/// Adjoint dynamics away from state-constraint activity: p_r' = 0, p_v' = -q_r,
/// p_m' = <p_v, (T - sigma/|u|) u> / m^2.
inline CostateRate adjoint_rhs(const State &x, const Costate &p, const Control &u, const VehicleParams &params)
{
    const double net_thrust = params.thrust_max * u.throttle - params.pressure_term;
    CostateRate out;
    out.p_v = -p.q_r();
    out.p_m = net_thrust * p.p_v.dot(u.direction) / (x.mass * x.mass);
    return out;
}

inline double qr_dot_d(const Costate &p, const Vec3 &d) { return p.q_r().dot(d); }

/// Time derivative of Psi along an extremal.
///
/// Vacuum: -(T/m)<q_r, d>. The pressure term adds sigma q <p_v, d>/m^2, which for
/// the unconstrained direction p_v/|p_v| is sigma q |p_v|/m^2.
inline double switching_rate(const State &x, const Costate &p, const Vec3 &d, const VehicleParams &params)
{
    return -params.thrust_max / x.mass * qr_dot_d(p, d) +
           params.pressure_term * params.flow_rate * p.p_v.dot(d) / (x.mass * x.mass);
}

} // namespace descent
