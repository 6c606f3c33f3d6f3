#include "fowf/dynamics.hpp"
#include "fowf/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fowf;

namespace
{
    constexpr double kRho = 1.225;

    double area() { return kPi * 63.0 * 63.0; }

    // Height gained by a chain of `length` hanging from a point where the vertical tension is v0,
    // integrated along arc length with RK4: dx/ds = H/T, dz/ds = V/T, V = v0 + w s.
    struct Shot
    {
        double x = 0.0;
        double z = 0.0;
    };

    Shot shoot(double h, double v0, double length, double w, int steps = 4000)
    {
        auto f = [&](double s) {
            const double v = v0 + w * s;
            const double t = std::hypot(h, v);
            return std::pair{h / t, v / t};
        };
        Shot out;
        const double ds = length / steps;
        for (int k = 0; k < steps; ++k)
        {
            const double s = k * ds;
            const auto k1 = f(s), k2 = f(s + 0.5 * ds), k4 = f(s + ds);
            out.x += ds / 6.0 * (k1.first + 4.0 * k2.first + k4.first);
            out.z += ds / 6.0 * (k1.second + 4.0 * k2.second + k4.second);
        }
        return out;
    }

    // Horizontal anchor-to-fairlead span for horizontal tension h, found by shooting.
    double oracle_span(double h, const MooringSpec& m)
    {
        const double w = m.line_weight_per_length, depth = m.water_depth, length = m.line_length;
        if (shoot(h, 0.0, length, w).z >= depth)
        {
            // Part of the chain rests on the seabed: find the suspended length that just reaches the surface.
            double lo = 0.0, hi = length;
            for (int it = 0; it < 100; ++it)
            {
                const double mid = 0.5 * (lo + hi);
                (shoot(h, 0.0, mid, w).z < depth ? lo : hi) = mid;
            }
            const double suspended = 0.5 * (lo + hi);
            return length - suspended + shoot(h, 0.0, suspended, w).x;
        }
        // Fully lifted: the anchor carries an upward pull v0.
        double lo = 0.0, hi = 1e9;
        for (int it = 0; it < 200; ++it)
        {
            const double mid = 0.5 * (lo + hi);
            (shoot(h, mid, length, w).z < depth ? lo : hi) = mid;
        }
        return shoot(h, 0.5 * (lo + hi), length, w).x;
    }

    TurbineSite site() { return TurbineSite{}; }

    // Mooring potential: work done against the line tensions along each span.
    double mooring_energy(const Vec2& p, const MooringSpec& m)
    {
        double e = 0.0;
        for (int k = 0; k < m.num_lines; ++k)
        {
            const double angle = kPi + 2.0 * kPi * k / m.num_lines;
            const Vec2 anchor = m.anchor_radius * Vec2(std::cos(angle), std::sin(angle));
            const double s1 = (anchor - p).norm(), s0 = m.anchor_radius;
            const int n = 400;
            const double hstep = (s1 - s0) / n;
            double sum = 0.0;
            for (int i = 0; i <= n; ++i)
            {
                const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
                sum += wgt * solve_catenary(s0 + i * hstep, m).horizontal_tension;
            }
            e += sum * hstep / 3.0;
        }
        return e;
    }
} // namespace

TEST(Aero, ThrustCoefficient)
{
    EXPECT_NEAR(thrust_coefficient(1.0 / 3.0), 8.0 / 9.0, 1e-15);
    EXPECT_NEAR(power_coefficient(1.0 / 3.0), 16.0 / 27.0, 1e-15);
    EXPECT_THROW(thrust_coefficient(0.5), DomainError);
    EXPECT_THROW(thrust_coefficient(0.0), DomainError);
    EXPECT_THROW(power_coefficient(-0.1), DomainError);
}

TEST(Aero, GreedyThrust)
{
    const Vec2 f = thrust_force({8.0, 0.0}, TurbineInput::greedy(), TurbineSpec{});
    const double expected = 0.5 * kRho * area() * (8.0 / 9.0) * 64.0;
    EXPECT_NEAR(expected, 4.345e5, 0.001 * 4.345e5);
    EXPECT_NEAR(f.x(), expected, 1e-6 * expected);
    EXPECT_NEAR(f.y(), 0.0, 1e-9);
}

TEST(Aero, EdgeOnRotorHasNoThrust)
{
    const Vec2 f = thrust_force({8.0, 0.0}, TurbineInput{1.0 / 3.0, kPi / 2.0}, TurbineSpec{});
    EXPECT_NEAR(f.norm(), 0.0, 1e-6);
}

TEST(Aero, ThrustBoundedByNormalWind)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> v(-12, 12), a(0.05, 0.45), g(-1.0, 1.0);
    for (int k = 0; k < 500; ++k)
    {
        const Vec2 w(v(rng), v(rng));
        const TurbineInput u{a(rng), g(rng)};
        const double bound = 0.5 * kRho * area() * thrust_coefficient(u.a) * w.squaredNorm();
        EXPECT_LE(thrust_force(w, u, TurbineSpec{}).norm(), bound * (1 + 1e-12));
    }
}

TEST(Aero, Power)
{
    const double p0 = power_output({8.0, 0.0}, TurbineInput::greedy(), TurbineSpec{});
    EXPECT_NEAR(p0, 2.317e6, 0.001 * 2.317e6);
    const double p10 = power_output({8.0, 0.0}, TurbineInput{1.0 / 3.0, deg_to_rad(10.0)}, TurbineSpec{});
    EXPECT_NEAR(p10, 2.213e6, 0.002 * 2.213e6);
    EXPECT_NEAR(p10, p0 * std::pow(std::cos(deg_to_rad(10.0)), 3), 1e-6);
    EXPECT_DOUBLE_EQ(power_output({-8.0, 0.0}, TurbineInput::greedy(), TurbineSpec{}), 0.0);
}

TEST(Hydro, DragFormula)
{
    EXPECT_EQ(hydro_force(Vec2::Zero(), TurbineSpec{}), Vec2::Zero());
    const Vec2 f = hydro_force({1.0, 0.0}, TurbineSpec{});
    EXPECT_DOUBLE_EQ(f.x(), -5e5);
    EXPECT_DOUBLE_EQ(f.y(), 0.0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> v(-2, 2);
    for (int k = 0; k < 100; ++k)
    {
        const Vec2 vel(v(rng), v(rng));
        EXPECT_LE(hydro_force(vel, TurbineSpec{}).dot(vel), 0.0);
    }
}

TEST(Catenary, MatchesShootingOracle)
{
    const MooringSpec m;
    for (double logh = std::log(3e3); logh <= std::log(3e6); logh += 0.25)
    {
        const double h = std::exp(logh);
        const double span = oracle_span(h, m);
        if (span < 760.0 || span > 925.0)
            continue;
        EXPECT_NEAR(catenary_span(h, m), span, 1e-3) << "H=" << h;
        const CatenarySolution sol = solve_catenary(span, m);
        EXPECT_NEAR(sol.horizontal_tension, h, 2e-3 * h) << "span=" << span;
    }
}

TEST(Catenary, MonotoneInSpan)
{
    const MooringSpec m;
    double prev = 0.0;
    for (double span = 760.0; span <= 915.0; span += 10.0)
    {
        const double h = solve_catenary(span, m).horizontal_tension;
        EXPECT_GT(h, prev) << span;
        EXPECT_GT(solve_catenary(span + 10.0, m).horizontal_tension, h);
        prev = h;
    }
}

TEST(Catenary, Regimes)
{
    const MooringSpec m;
    const CatenarySolution slack = solve_catenary(800.0, m);
    EXPECT_EQ(slack.regime, CatenaryRegime::PartiallyResting);
    EXPECT_GT(slack.grounded_length, 0.0);
    EXPECT_LT(slack.grounded_length, m.line_length);
    const CatenarySolution taut = solve_catenary(927.0, m);
    EXPECT_EQ(taut.regime, CatenaryRegime::FullyLifted);
    EXPECT_DOUBLE_EQ(taut.grounded_length, 0.0);
    EXPECT_GT(taut.horizontal_tension, 0.0);
    EXPECT_GT(taut.vertical_tension, 0.0);
}

TEST(Catenary, Errors)
{
    const MooringSpec m;
    EXPECT_THROW(solve_catenary(0.0, m), DomainError);
    EXPECT_THROW(solve_catenary(-5.0, m), DomainError);
    EXPECT_THROW(solve_catenary(catenary_max_span(m) + 1.0, m), NoSolutionError);
    EXPECT_THROW(solve_catenary(960.0, m), NoSolutionError);
}

TEST(Mooring, NeutralIsBalanced)
{
    const MooringSpec m;
    const Vec2 f = mooring_force(Vec2::Zero(), Vec2::Zero(), m);
    EXPECT_LT(f.norm(), 1.0);
}

TEST(Mooring, Restoring)
{
    const MooringSpec m;
    EXPECT_LT(mooring_force({50.0, 0.0}, Vec2::Zero(), m).x(), 0.0);
    for (double r = 10.0; r <= 120.0; r += 10.0)
        for (double ang = 0.0; ang < 2.0 * kPi; ang += kPi / 12.0)
        {
            const Vec2 d = r * Vec2(std::cos(ang), std::sin(ang));
            EXPECT_LE(mooring_force(d, Vec2::Zero(), m).dot(d), 0.0) << r << " " << ang;
        }
}

TEST(Mooring, BalancesGreedyThrustNearCalibratedDisplacement)
{
    const MooringSpec m;
    const double thrust = 0.5 * kRho * area() * (8.0 / 9.0) * 64.0;
    const Vec2 f = mooring_force({92.1, 0.0}, Vec2::Zero(), m);
    EXPECT_NEAR(-f.x(), thrust, 0.02 * thrust);
    EXPECT_NEAR(f.y(), 0.0, 1.0);
}

TEST(Platform, EquilibriumIsStationary)
{
    // No wind and the platform at its neutral position: every force vanishes.
    const TurbineState s{};
    const TurbineState next = step_platform(s, TurbineInput::greedy(), Vec2::Zero(), site(), 1.0);
    EXPECT_NEAR(next.x, 0.0, 1e-9);
    EXPECT_NEAR(next.y, 0.0, 1e-9);
    EXPECT_NEAR(next.vx, 0.0, 1e-9);
    EXPECT_NEAR(next.vy, 0.0, 1e-9);
}

TEST(Platform, InvalidStepRejected)
{
    EXPECT_THROW(step_platform({}, TurbineInput::greedy(), Vec2::Zero(), site(), 0.0), DomainError);
    EXPECT_THROW(step_platform({}, TurbineInput::greedy(), Vec2::Zero(), site(), 6.0), DomainError);
    EXPECT_THROW(step_platform({}, TurbineInput{0.7, 0.0}, Vec2::Zero(), site(), 1.0), DomainError);
}

TEST(Platform, NonFiniteStateDiverges)
{
    const TurbineState bad{std::nan(""), 0.0, 0.0, 0.0};
    EXPECT_THROW(step_platform(bad, TurbineInput::greedy(), Vec2::Zero(), site(), 1.0), Error);
}

TEST(Platform, MechanicalEnergyDecaysWithoutWind)
{
    const MooringSpec m;
    const TurbineSpec spec;
    TurbineState s{60.0, -40.0, 0.2, 0.3};
    auto energy = [&](const TurbineState& st) {
        return 0.5 * spec.effective_mass * (st.vx * st.vx + st.vy * st.vy) + mooring_energy(st.position(), m);
    };
    double prev = energy(s);
    for (int k = 0; k < 400; ++k)
    {
        s = step_platform(s, TurbineInput::greedy(), Vec2::Zero(), site(), 1.0);
        const double e = energy(s);
        EXPECT_LE(e, prev * (1.0 + 1e-6) + 1e-3) << k;
        prev = e;
    }
    EXPECT_LT(prev, 0.5 * energy({60.0, -40.0, 0.2, 0.3}));
}

TEST(Platform, Rk4ConvergenceOrder)
{
    const TurbineState s0{50.0, 30.0, 0.3, -0.2};
    const TurbineInput u{1.0 / 3.0, 0.1};
    const Vec2 wind(8.0, 1.0);
    auto reference = [&](double dt) {
        TurbineState s = s0;
        const int n = 2000;
        for (int k = 0; k < n; ++k)
            s = step_platform(s, u, wind, site(), dt / n);
        return s;
    };
    auto error = [&](double dt) {
        const TurbineState a = step_platform(s0, u, wind, site(), dt);
        const TurbineState b = reference(dt);
        return std::hypot(a.x - b.x, a.y - b.y) + std::hypot(a.vx - b.vx, a.vy - b.vy) * dt;
    };
    const double e4 = error(4.0), e2 = error(2.0);
    EXPECT_GT(e4, 0.0);
    EXPECT_GE(e4 / e2, 8.0) << e4 << " " << e2;
}

TEST(Platform, IsolatedTurbineSettles)
{
    TurbineState s{};
    for (int k = 0; k < 3600; ++k)
        s = step_platform(s, TurbineInput::greedy(), {8.0, 0.0}, site(), 1.0);
    EXPECT_LT(std::hypot(s.vx, s.vy), 0.01);
    EXPECT_GE(s.x, 85.0);
    EXPECT_LE(s.x, 105.0);
    EXPECT_NEAR(s.y, 0.0, 1e-6);
}

TEST(Platform, SteadyStateIndependentOfStep)
{
    auto settle = [](double dt) {
        TurbineState s{};
        const int n = static_cast<int>(std::lround(4000.0 / dt));
        for (int k = 0; k < n; ++k)
            s = step_platform(s, TurbineInput{1.0 / 3.0, deg_to_rad(10.0)}, {8.0, 0.0}, site(), dt);
        return s;
    };
    const TurbineState ref = settle(1.0);
    for (double dt : {0.5, 2.0})
    {
        const TurbineState s = settle(dt);
        EXPECT_NEAR(s.x, ref.x, 0.5) << dt;
        EXPECT_NEAR(s.y, ref.y, 0.5) << dt;
    }
}

TEST(Platform, ForcesAreFinite)
{
    const ForceBreakdown f = platform_forces({80.0, 20.0, 0.1, 0.0}, TurbineInput::greedy(), {8.0, 0.0}, site());
    EXPECT_TRUE(f.thrust.allFinite());
    EXPECT_TRUE(f.hydro.allFinite());
    EXPECT_TRUE(f.mooring.allFinite());
    EXPECT_TRUE((f.total() - (f.thrust + f.hydro + f.mooring)).isZero());
}
