#include "fowf/wind.hpp"

#include "fowf/error.hpp"

#include <fmt/format.h>
#include <gsl/gsl_interp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace fowf
{
    struct WindSeries::Spline
    {
        std::vector<double> t;
        std::vector<double> v;
        gsl_interp* interp = nullptr;

        Spline(std::vector<double> times, std::vector<double> values) : t(std::move(times)), v(std::move(values))
        {
            // GSL's natural cubic spline needs three points; two knots reduce to a line.
            const gsl_interp_type* type = t.size() >= 3 ? gsl_interp_cspline : gsl_interp_linear;
            interp = gsl_interp_alloc(type, t.size());
            gsl_interp_init(interp, t.data(), v.data(), t.size());
        }
        ~Spline() { gsl_interp_free(interp); }
        Spline(const Spline&) = delete;
        Spline& operator=(const Spline&) = delete;

        double eval(double x) const { return gsl_interp_eval(interp, t.data(), v.data(), x, nullptr); }
    };

    void WindConfig::validate() const
    {
        if (!(sigma >= 0.0 && sigma <= 1.0))
            throw ConfigError("wind sigma must lie in [0, 1]");
        if (!(duration > 0.0))
            throw ConfigError("wind duration must be positive");
    }

    WindSeries::WindSeries(std::vector<double> knot_times, std::vector<Vec2> knot_velocities, double duration)
        : knot_times_(std::move(knot_times)), knot_velocities_(std::move(knot_velocities)), duration_(duration)
    {
        if (knot_times_.size() < 2 || knot_times_.size() != knot_velocities_.size())
            throw ConfigError("wind series needs at least two knots");
        std::vector<double> vx, vy;
        for (const auto& v : knot_velocities_)
        {
            vx.push_back(v.x());
            vy.push_back(v.y());
        }
        vx_ = std::make_shared<const Spline>(knot_times_, std::move(vx));
        vy_ = std::make_shared<const Spline>(knot_times_, std::move(vy));
    }

    WindSample WindSeries::sample(double t) const
    {
        WindSample s;
        const double tc = std::clamp(t, 0.0, duration_);
        s.clamped = tc != t;
        s.velocity = Vec2(vx_->eval(tc), vy_->eval(tc));
        return s;
    }

    std::vector<Vec2> WindSeries::resampled() const
    {
        const auto n = static_cast<std::size_t>(std::floor(duration_ / kResolution + 1e-9)) + 1;
        std::vector<Vec2> out;
        out.reserve(n);
        for (std::size_t k = 0; k < n; ++k)
            out.push_back(sample(static_cast<double>(k) * kResolution).velocity);
        return out;
    }

    void WindSeries::write_csv(const std::filesystem::path& path) const
    {
        std::ofstream out(path);
        if (!out)
            throw IoError("cannot write " + path.string());
        out << "t_s,vx_ms,vy_ms\n";
        const auto samples = resampled();
        for (std::size_t k = 0; k < samples.size(); ++k)
            out << fmt::format("{:.1f},{:.9g},{:.9g}\n", static_cast<double>(k) * kResolution, samples[k].x(),
                               samples[k].y());
    }

    WindSeries generate_wind_series(const WindConfig& cfg)
    {
        cfg.validate();
        const double amplitude = cfg.sigma * cfg.base_velocity.norm();
        const auto intervals = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(cfg.duration / WindSeries::kKnotInterval - 1e-9)));

        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> perturb(-amplitude, amplitude);
        std::vector<double> times;
        std::vector<Vec2> knots;
        for (std::size_t k = 0; k <= intervals; ++k)
        {
            times.push_back(static_cast<double>(k) * WindSeries::kKnotInterval);
            Vec2 v = cfg.base_velocity;
            if (amplitude > 0.0)
            {
                const double ux = perturb(rng);
                const double uy = perturb(rng);
                v += Vec2(ux, uy);
            }
            knots.push_back(v);
        }
        return WindSeries(std::move(times), std::move(knots), cfg.duration);
    }

    WindSample sample_wind(const WindSeries& series, double t) { return series.sample(t); }
} // namespace fowf
