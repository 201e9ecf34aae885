#pragma once

#include <cmath>

#include "types.hpp"

namespace descent {

/// Right-hand side of the translational dynamics.
///
/// r' = v,  v' = (T - sigma/|u|) u/m - g,  m' = -q|u|  with u = throttle * direction.
/// sigma = 0 gives the vacuum model.
inline Vec7 eval_dynamics(const State &x, const Control &u, const VehicleParams &p)
{
    if (!x.position.allFinite() || !x.velocity.allFinite() || !std::isfinite(x.mass) ||
        !u.direction.allFinite() || !std::isfinite(u.throttle))
        throw InvalidInput("eval_dynamics: non-finite input");
    if (!(x.mass > 0.0))
        throw InvalidInput("eval_dynamics: mass must be positive");
    if (p.pressure_term > 0.0 && u.throttle == 0.0)
        throw InvalidInput("eval_dynamics: zero throttle with pressure term");

    // (T - sigma/a) * a * d = (T a - sigma) d, exact for sigma = 0.
    const double net_thrust = p.thrust_max * u.throttle - p.pressure_term;
    Vec7 dx;
    dx.head<3>() = x.velocity;
    dx.segment<3>(3) = (net_thrust / x.mass) * u.direction - p.gravity_vector();
    dx[6] = -p.flow_rate * u.throttle;
    return dx;
}

/// Throttle that balances gravity with vertical thrust: T*a - sigma = m*g0.
inline double hover_throttle(double mass, const VehicleParams &p)
{
    return (mass * p.gravity + p.pressure_term) / p.thrust_max;
}

struct GlideSlope
{
    double h = 0.0;
    Vec3 gradient = Vec3::UnitZ();
};

/// Glide-slope constraint value and its gradient n = grad h(r).
inline GlideSlope glide_slope(const Vec3 &r, double gamma)
{
    if (gamma == 0.0)
        return {r.z(), Vec3::UnitZ()};
    const double horizontal = r.head<2>().norm();
    if (horizontal == 0.0)
        throw InvalidInput("glide_slope: gradient undefined at cone apex");
    const double t = std::tan(gamma);
    GlideSlope out;
    out.h = r.z() - t * horizontal;
    out.gradient << -t * r.x() / horizontal, -t * r.y() / horizontal, 1.0;
    return out;
}

inline bool in_pointing_cone(const Vec3 &u, double theta, double tol = 0.0)
{
    return u.z() >= u.norm() * std::cos(theta) - tol;
}

/// Pointing slack d_z - cos(theta), nonnegative inside the cone.
inline double pointing_slack(const Vec3 &direction, double theta)
{
    return direction.z() - std::cos(theta);
}

/// Checks the Control invariants against the vehicle and constraint set.
inline void validate_control(const Control &u, const VehicleParams &p, const ConstraintSet &c)
{
    if (std::abs(u.direction.norm() - 1.0) > 1e-12)
        throw InvalidInput("control: direction is not a unit vector");
    if (u.throttle < p.throttle_min || u.throttle > p.throttle_max)
        throw InvalidInput("control: throttle outside [throttle_min, throttle_max]");
    if (c.pointing_enabled && u.direction.z() < std::cos(c.pointing_half_angle) - 1e-9)
        throw InvalidInput("control: direction outside pointing cone");
}

} // namespace descent
