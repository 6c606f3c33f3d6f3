#include "fowf/dynamics.hpp"

#include "fowf/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace fowf
{
    namespace
    {
        constexpr double kMinTension = 1.0;
        constexpr double kMaxTension = 1.0e9;
        constexpr double kSpanTolerance = 1.0e-3;

        void check_induction(double a)
        {
            if (!(a > 0.0 && a < 0.5))
                throw DomainError(fmt::format("axial induction factor {} outside (0, 0.5)", a));
        }

        double suspended_length(double h, const MooringSpec& m)
        {
            const double depth = m.water_depth;
            return std::sqrt(depth * depth + 2.0 * depth * h / m.line_weight_per_length);
        }

        struct Derivative
        {
            Vec2 velocity;
            Vec2 acceleration;
        };
    } // namespace

    double thrust_coefficient(double a)
    {
        check_induction(a);
        return 4.0 * a * (1.0 - a);
    }

    double power_coefficient(double a)
    {
        check_induction(a);
        return 4.0 * a * (1.0 - a) * (1.0 - a);
    }

    Vec2 thrust_force(const Vec2& wind, const TurbineInput& input, const TurbineSpec& spec)
    {
        const double ct = thrust_coefficient(input.a);
        const Vec2 axis = rotor_axis(input.yaw);
        const double un = wind.dot(axis);
        return 0.5 * spec.air_density * spec.hub_area() * ct * un * std::abs(un) * axis;
    }

    double power_output(const Vec2& wind, const TurbineInput& input, const TurbineSpec& spec)
    {
        const double cp = power_coefficient(input.a);
        const double un = wind.dot(rotor_axis(input.yaw));
        if (un <= 0.0)
            return 0.0;
        return 0.5 * spec.air_density * spec.hub_area() * cp * un * un * un;
    }

    Vec2 hydro_force(const Vec2& platform_velocity, const TurbineSpec& spec)
    {
        return -spec.hydro_drag_coeff * platform_velocity.norm() * platform_velocity;
    }

    double catenary_span(double h, const MooringSpec& m)
    {
        const double w = m.line_weight_per_length;
        const double length = m.line_length;
        const double ls = suspended_length(h, m);
        if (ls <= length)
            return length - ls + (h / w) * std::asinh(w * ls / h);
        const double chord = std::sqrt(length * length - m.water_depth * m.water_depth);
        return (2.0 * h / w) * std::asinh(w * chord / (2.0 * h));
    }

    double catenary_max_span(const MooringSpec& m)
    {
        return std::sqrt(m.line_length * m.line_length - m.water_depth * m.water_depth);
    }

    CatenarySolution solve_catenary(double horizontal_span, const MooringSpec& m)
    {
        if (!(horizontal_span > 0.0))
            throw DomainError("catenary span must be positive");
        if (horizontal_span >= catenary_span(kMaxTension, m))
            throw NoSolutionError(fmt::format("mooring span {:.3f} m exceeds the reach of a {:.1f} m line",
                                              horizontal_span, m.line_length));

        double h = kMinTension;
        if (catenary_span(kMinTension, m) < horizontal_span)
        {
            double lo = std::log(kMinTension);
            double hi = std::log(kMaxTension);
            for (int it = 0; it < 200; ++it)
            {
                const double mid = 0.5 * (lo + hi);
                h = std::exp(mid);
                const double residual = catenary_span(h, m) - horizontal_span;
                if (std::abs(residual) < kSpanTolerance)
                    break;
                (residual < 0.0 ? lo : hi) = mid;
            }
            // Secant polish inside the bracket so the tension is a smooth function of the span.
            double f_lo = catenary_span(std::exp(lo), m) - horizontal_span;
            double f_hi = catenary_span(std::exp(hi), m) - horizontal_span;
            double x = std::log(h);
            for (int it = 0; it < 30; ++it)
            {
                const double f = catenary_span(std::exp(x), m) - horizontal_span;
                if (std::abs(f) < 1e-10 * horizontal_span)
                    break;
                if (f < 0.0)
                {
                    lo = x;
                    f_lo = f;
                }
                else
                {
                    hi = x;
                    f_hi = f;
                }
                const double next = lo - f_lo * (hi - lo) / (f_hi - f_lo);
                x = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
            }
            h = std::exp(x);
        }
        // Spans shorter than the slack-line span leave the chain lying loose: minimum tension.

        CatenarySolution sol;
        sol.horizontal_tension = h;
        const double w = m.line_weight_per_length;
        const double ls = suspended_length(h, m);
        if (ls <= m.line_length)
        {
            sol.regime = CatenaryRegime::PartiallyResting;
            sol.grounded_length = m.line_length - ls;
            sol.vertical_tension = w * ls;
        }
        else
        {
            sol.regime = CatenaryRegime::FullyLifted;
            sol.grounded_length = 0.0;
            const double spread = w * catenary_span(h, m) / h;
            const double mean = std::asinh(w * m.water_depth / (2.0 * h * std::sinh(0.5 * spread)));
            const double anchor_vertical = h * std::sinh(mean - 0.5 * spread);
            sol.vertical_tension = anchor_vertical + w * m.line_length;
        }
        return sol;
    }

    Vec2 mooring_force(const Vec2& position, const Vec2& neutral, const MooringSpec& m)
    {
        Vec2 force = Vec2::Zero();
        for (int k = 0; k < m.num_lines; ++k)
        {
            const double angle = kPi + 2.0 * kPi * k / m.num_lines;
            const Vec2 anchor = neutral + m.anchor_radius * Vec2(std::cos(angle), std::sin(angle));
            const Vec2 to_anchor = anchor - position;
            const double span = to_anchor.norm();
            force += solve_catenary(span, m).horizontal_tension * to_anchor / span;
        }
        return force;
    }

    ForceBreakdown platform_forces(const TurbineState& state, const TurbineInput& input, const Vec2& wind,
                                   const TurbineSite& site)
    {
        ForceBreakdown f;
        f.thrust = thrust_force(wind - state.velocity(), input, site.spec);
        f.hydro = hydro_force(state.velocity(), site.spec);
        f.mooring = mooring_force(state.position(), site.neutral, site.mooring);
        return f;
    }

    TurbineState step_platform(const TurbineState& state, const TurbineInput& input, const Vec2& wind,
                               const TurbineSite& site, double dt)
    {
        if (!(dt > 0.0 && dt <= 5.0))
            throw DomainError(fmt::format("integrator step {} s outside (0, 5]", dt));
        check_induction(input.a);

        const double inv_mass = 1.0 / site.spec.effective_mass;
        auto deriv = [&](const Vec2& p, const Vec2& v) {
            const TurbineState s{p.x(), p.y(), v.x(), v.y()};
            return Derivative{v, platform_forces(s, input, wind, site).total() * inv_mass};
        };

        const Vec2 p0 = state.position();
        const Vec2 v0 = state.velocity();
        const Derivative k1 = deriv(p0, v0);
        const Derivative k2 = deriv(p0 + 0.5 * dt * k1.velocity, v0 + 0.5 * dt * k1.acceleration);
        const Derivative k3 = deriv(p0 + 0.5 * dt * k2.velocity, v0 + 0.5 * dt * k2.acceleration);
        const Derivative k4 = deriv(p0 + dt * k3.velocity, v0 + dt * k3.acceleration);

        const Vec2 p1 = p0 + dt / 6.0 * (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity);
        const Vec2 v1 =
            v0 + dt / 6.0 * (k1.acceleration + 2.0 * k2.acceleration + 2.0 * k3.acceleration + k4.acceleration);
        const TurbineState next{p1.x(), p1.y(), v1.x(), v1.y()};
        if (!next.finite())
            throw DivergedError("platform state became non-finite");
        return next;
    }
} // namespace fowf
