#pragma once

#include "fowf/farm.hpp"

namespace fowf
{
    struct ForceBreakdown
    {
        Vec2 thrust = Vec2::Zero();
        Vec2 hydro = Vec2::Zero();
        Vec2 mooring = Vec2::Zero();

        Vec2 total() const { return thrust + hydro + mooring; }
    };

    enum class CatenaryRegime
    {
        PartiallyResting,
        FullyLifted,
    };

    struct CatenarySolution
    {
        double horizontal_tension = 0.0; // N
        double vertical_tension = 0.0;   // N, at the fairlead
        double grounded_length = 0.0;    // m of chain on the seabed
        CatenaryRegime regime = CatenaryRegime::PartiallyResting;
    };

    /// Actuator-disc thrust coefficient 4a(1-a).
    double thrust_coefficient(double a);
    /// Actuator-disc power coefficient 4a(1-a)^2.
    double power_coefficient(double a);

    /// Rotor axis unit vector for a yaw angle measured in the global frame.
    inline Vec2 rotor_axis(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }

    /// Thrust along the rotor axis from the wind seen by the rotor (relative to the platform).
    Vec2 thrust_force(const Vec2& wind, const TurbineInput& input, const TurbineSpec& spec);
    /// Aerodynamic power; yaw losses enter through the cubed axial wind component.
    double power_output(const Vec2& wind, const TurbineInput& input, const TurbineSpec& spec);
    /// Lumped quadratic Morison drag, always opposing platform velocity.
    Vec2 hydro_force(const Vec2& platform_velocity, const TurbineSpec& spec);

    /// Horizontal fairlead-to-anchor distance of an inextensible chain carrying horizontal
    /// tension h. Increasing in h; bounded by sqrt(L^2 - depth^2).
    double catenary_span(double horizontal_tension, const MooringSpec& mooring);
    /// Largest span the line can reach before it becomes a straight taut bar.
    double catenary_max_span(const MooringSpec& mooring);
    CatenarySolution solve_catenary(double horizontal_span, const MooringSpec& mooring);

    /// Sum of horizontal line tensions acting on the fairlead, lines evenly spaced with the
    /// first one pointing upwind (-x).
    Vec2 mooring_force(const Vec2& position, const Vec2& neutral, const MooringSpec& mooring);

    ForceBreakdown platform_forces(const TurbineState& state, const TurbineInput& input, const Vec2& wind,
                                   const TurbineSite& site);

    /// One RK4 step of m dv/dt = F_thrust + F_hydro + F_mooring, dx/dt = v. The thrust is
    /// evaluated on the wind relative to the moving platform at every substage.
    TurbineState step_platform(const TurbineState& state, const TurbineInput& input, const Vec2& wind,
                               const TurbineSite& site, double dt);
} // namespace fowf
