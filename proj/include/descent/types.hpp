#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace descent {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec7 = Eigen::Matrix<double, 7, 1>;

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Raised for malformed user input: invalid parameters, scenarios, files.
class InvalidInput : public std::invalid_argument
{
  public:
    explicit InvalidInput(const std::string &what) : std::invalid_argument(what) {}
};

enum class Failure
{
    fuel_exhausted,
    singular_arc,
    non_finite,
    max_iterations,
    divergence,
    constraint_active,
};

inline const char *to_string(Failure f)
{
    switch (f) {
    case Failure::fuel_exhausted: return "fuel exhausted";
    case Failure::singular_arc: return "singular arc encountered";
    case Failure::non_finite: return "non-finite integration";
    case Failure::max_iterations: return "maximum iterations reached";
    case Failure::divergence: return "divergence";
    case Failure::constraint_active: return "glide-slope constraint active";
    }
    return "unknown failure";
}

/// Raised by integrators and solvers when a run cannot complete.
class SolverError : public std::runtime_error
{
  public:
    SolverError(Failure kind, const std::string &detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind)
    {
    }
    Failure kind() const { return kind_; }

  private:
    Failure kind_;
};

/// Physical constants of the lander. SI units.
struct VehicleParams
{
    double thrust_max = 0.0;    // T [N]
    double flow_rate = 0.0;     // q [kg/s]
    double mass_empty = 0.0;    // m_e [kg]
    double gravity = 0.0;       // g0 [m/s^2]
    double throttle_min = 0.0;  // u_min
    double throttle_max = 0.0;  // u_max
    double pressure_term = 0.0; // sigma [N], 0 in vacuum

    bool atmosphere() const { return pressure_term > 0.0; }

    Vec3 gravity_vector() const { return {0.0, 0.0, gravity}; }

    void validate() const
    {
        auto finite = [](double x) { return std::isfinite(x); };
        if (!(finite(thrust_max) && finite(flow_rate) && finite(mass_empty) && finite(gravity) &&
              finite(throttle_min) && finite(throttle_max) && finite(pressure_term)))
            throw InvalidInput("vehicle: non-finite parameter");
        if (!(thrust_max > 0.0))
            throw InvalidInput("vehicle.thrust_max must be > 0");
        if (!(mass_empty > 0.0))
            throw InvalidInput("vehicle.mass_empty must be > 0");
        if (!(gravity > 0.0))
            throw InvalidInput("vehicle.gravity must be > 0");
        if (flow_rate < 0.0)
            throw InvalidInput("vehicle.flow_rate must be >= 0");
        if (!(throttle_min > 0.0 && throttle_min <= throttle_max && throttle_max <= 1.0))
            throw InvalidInput("vehicle: throttle bounds must satisfy 0 < throttle_min <= throttle_max <= 1");
        if (pressure_term < 0.0)
            throw InvalidInput("vehicle.pressure_term must be >= 0");
        if (pressure_term > 0.0 && thrust_max * throttle_min < pressure_term)
            throw InvalidInput("vehicle.pressure_term: net thrust must stay positive, "
                               "thrust_max*throttle_min must be >= pressure_term");
    }
};

struct ConstraintSet
{
    double pointing_half_angle = 0.0; // theta [rad]
    double glide_slope_angle = 0.0;   // gamma [rad]
    bool glide_slope_enabled = false;
    bool pointing_enabled = false;

    void validate() const
    {
        if (pointing_enabled && !(pointing_half_angle >= 0.0 && pointing_half_angle < kPi / 2))
            throw InvalidInput("constraints.pointing_half_angle must lie in [0, 90) degrees");
        if (glide_slope_enabled && !(glide_slope_angle >= 0.0 && glide_slope_angle < kPi / 2))
            throw InvalidInput("constraints.glide_slope_angle must lie in [0, 90) degrees");
    }
};

struct State
{
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double mass = 0.0;

    Vec7 pack() const
    {
        Vec7 y;
        y << position, velocity, mass;
        return y;
    }
    static State unpack(const Vec7 &y) { return {y.head<3>(), y.segment<3>(3), y[6]}; }
};

/// Thrust command stored as direction and throttle, u = throttle * direction.
struct Control
{
    Vec3 direction = Vec3::UnitZ();
    double throttle = 0.0;

    Vec3 vector() const { return throttle * direction; }
};

enum class Cost
{
    min_fuel,
    max_final_mass,
    min_time,
};

enum class Model
{
    vacuum,
    atmosphere,
};

inline const char *to_string(Cost c)
{
    switch (c) {
    case Cost::min_fuel: return "min_fuel";
    case Cost::max_final_mass: return "max_final_mass";
    case Cost::min_time: return "min_time";
    }
    return "?";
}

inline const char *to_string(Model m) { return m == Model::vacuum ? "vacuum" : "atmosphere"; }

/// Glide-slope value h(r) = z - tan(gamma)*|(x,y)|; defined everywhere, including the apex.
inline double glide_slope_value(const Vec3 &r, double gamma)
{
    return r.z() - std::tan(gamma) * r.head<2>().norm();
}

struct Scenario
{
    VehicleParams params;
    ConstraintSet constraints;
    State initial;
    /// Pinpoint landing target; when absent only (z, v_z)(t_f) = (0, 0) is imposed.
    std::optional<Vec2> final_position_xy = Vec2::Zero();
    Vec3 final_velocity = Vec3::Zero();
    Cost cost = Cost::min_fuel;
    /// Fixed final time; free when absent.
    std::optional<double> final_time;

    Model model() const { return params.atmosphere() ? Model::atmosphere : Model::vacuum; }
    bool pinpoint() const { return final_position_xy.has_value(); }

    Vec3 target_position() const
    {
        return final_position_xy ? Vec3(final_position_xy->x(), final_position_xy->y(), 0.0) : Vec3::Zero();
    }

    void validate() const
    {
        params.validate();
        constraints.validate();
        if (params.atmosphere() && (constraints.pointing_enabled || constraints.glide_slope_enabled))
            throw InvalidInput("constraints: the atmosphere model (pressure_term > 0) admits neither "
                               "pointing nor glide-slope constraints");
        if (!initial.position.allFinite() || !initial.velocity.allFinite() || !std::isfinite(initial.mass))
            throw InvalidInput("initial: non-finite state");
        if (!(initial.mass > params.mass_empty))
            throw InvalidInput("initial.mass must exceed vehicle.mass_empty");
        if (constraints.glide_slope_enabled &&
            glide_slope_value(initial.position, constraints.glide_slope_angle) < 0.0)
            throw InvalidInput("initial.position violates the glide-slope constraint");
        if (final_position_xy && !final_position_xy->allFinite())
            throw InvalidInput("final.position: non-finite");
        if (!final_velocity.allFinite() || final_velocity.z() != 0.0)
            throw InvalidInput("final.velocity: vertical component must be 0");
        if (cost == Cost::max_final_mass && !(params.flow_rate > 0.0))
            throw InvalidInput("cost: max_final_mass requires vehicle.flow_rate > 0");
        if (final_time && !(*final_time > 0.0))
            throw InvalidInput("final.time must be > 0");
    }
};

} // namespace descent
