#pragma once

#include "fowf/farm.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

namespace fowf
{
    struct WindConfig
    {
        Vec2 base_velocity{8.0, 0.0};
        double sigma = 0.0;      // perturbation fraction of |base_velocity|, in [0, 1]
        double duration = 3600.0; // s
        std::uint64_t seed = 0;

        void validate() const;
    };

    struct WindSample
    {
        Vec2 velocity;
        bool clamped = false; // t was outside [0, duration]
    };

    /// Ten-minute knots perturbed uniformly around the base velocity, joined by a
    /// natural cubic spline per component.
    class WindSeries
    {
    public:
        static constexpr double kKnotInterval = 600.0;
        static constexpr double kResolution = 0.1;

        WindSeries(std::vector<double> knot_times, std::vector<Vec2> knot_velocities, double duration);

        const std::vector<double>& knot_times() const { return knot_times_; }
        const std::vector<Vec2>& knot_velocities() const { return knot_velocities_; }
        double duration() const { return duration_; }

        WindSample sample(double t) const;
        /// Velocities on the 0.1 s grid covering [0, duration].
        std::vector<Vec2> resampled() const;

        void write_csv(const std::filesystem::path& path) const;

    private:
        struct Spline;
        std::vector<double> knot_times_;
        std::vector<Vec2> knot_velocities_;
        double duration_;
        std::shared_ptr<const Spline> vx_;
        std::shared_ptr<const Spline> vy_;
    };

    WindSeries generate_wind_series(const WindConfig& cfg);
    WindSample sample_wind(const WindSeries& series, double t);
} // namespace fowf
