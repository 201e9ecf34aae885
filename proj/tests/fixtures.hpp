#pragma once

#include <descent/types.hpp>

namespace descent::testing {

// Mars lander constants used throughout the numerical experiments.
inline VehicleParams mars_vehicle(double flow_rate = 0.0)
{
    VehicleParams p;
    p.thrust_max = 16573.0;
    p.flow_rate = flow_rate;
    p.mass_empty = 1505.0;
    p.gravity = 3.71;
    p.throttle_min = 0.3;
    p.throttle_max = 0.8;
    return p;
}

inline State mars_initial_2d() { return {Vec3(2000.0, 0.0, 1500.0), Vec3(100.0, 0.0, -75.0), 1905.0}; }

inline State mars_initial_1d() { return {Vec3(0.0, 0.0, 1500.0), Vec3(0.0, 0.0, -75.0), 1905.0}; }

/// Constant-mass, min-fuel pinpoint landing without constraints.
inline Scenario mars_unconstrained(bool one_d = false)
{
    Scenario sc;
    sc.params = mars_vehicle();
    sc.initial = one_d ? mars_initial_1d() : mars_initial_2d();
    sc.cost = Cost::min_fuel;
    return sc;
}

inline Scenario mars_altitude(bool pointing)
{
    Scenario sc = mars_unconstrained();
    sc.constraints.glide_slope_enabled = true;
    sc.constraints.glide_slope_angle = 0.0;
    sc.constraints.pointing_enabled = pointing;
    sc.constraints.pointing_half_angle = deg2rad(45.0);
    return sc;
}

inline Scenario mars_varying_mass()
{
    Scenario sc;
    sc.params = mars_vehicle(8.4294);
    sc.initial = mars_initial_2d();
    sc.cost = Cost::max_final_mass;
    sc.constraints.glide_slope_enabled = true;
    sc.constraints.glide_slope_angle = deg2rad(5.0);
    sc.constraints.pointing_enabled = true;
    sc.constraints.pointing_half_angle = deg2rad(45.0);
    return sc;
}

inline Scenario with_pressure(Scenario sc, double sigma)
{
    sc.params.pressure_term = sigma;
    return sc;
}

} // namespace descent::testing
