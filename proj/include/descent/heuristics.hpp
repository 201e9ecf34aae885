#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "types.hpp"

namespace descent {

/// Time-of-flight estimate: twice the time to cancel |v0| at full throttle.
inline double gravity_turn_time(const Scenario &sc)
{
    const auto &p = sc.params;
    const double decel = (p.thrust_max * p.throttle_max - p.pressure_term) / sc.initial.mass - p.gravity;
    if (!(decel > 0.0))
        throw InvalidInput("vehicle cannot decelerate: net thrust at throttle_max does not exceed the weight");
    return std::max(2.0 * sc.initial.velocity.norm() / decel, 1.0);
}

/// Thrust acceleration c0 + c1 t of the minimum-energy transfer in time t_f.
/// Axes left free by the boundary conditions get no thrust.
inline std::pair<Vec3, Vec3> min_energy_profile(const Scenario &sc, double t_f)
{
    const double tf = t_f;
    const Vec3 dv = sc.final_velocity - sc.initial.velocity;
    const Vec3 dr = sc.target_position() - sc.initial.position - sc.initial.velocity * tf;
    // A tf + c1 tf^2/2 = dv,  A tf^2/2 + c1 tf^3/6 = dr  with A = c0 - g.
    Eigen::Matrix2d M;
    M << tf, tf * tf / 2, tf * tf / 2, tf * tf * tf / 6;
    const Eigen::Matrix2d Minv = M.inverse();
    Vec3 c0 = Vec3::Zero(), c1 = Vec3::Zero();
    for (int i = 0; i < 3; ++i) {
        if (!sc.pinpoint() && i < 2)
            continue;
        const Vec2 ac = Minv * Vec2(dv[i], dr[i]);
        c0[i] = ac[0];
        c1[i] = ac[1];
    }
    c0.z() += sc.params.gravity;
    return {c0, c1};
}

} // namespace descent
