#include "fowf/wake.hpp"

#include "fowf/dynamics.hpp"
#include "fowf/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fowf
{
    namespace
    {
        constexpr double kMinSeparation = 1.0e-3; // m between consecutive stations of one wake
    }

    std::size_t WakeField::element_count() const
    {
        std::size_t n = 0;
        for (const auto& w : wakes_)
            n += w.size();
        return n;
    }

    bool WakeField::emit(const WakeElement& element)
    {
        auto& wake = wakes_.at(element.source);
        if (!wake.empty() && element.x_station >= wake.front().x_station - kMinSeparation)
            return false;
        wake.push_front(element);
        return true;
    }

    void WakeField::write_csv(const std::filesystem::path& path) const
    {
        std::ofstream out(path);
        if (!out)
            throw IoError("cannot write " + path.string());
        out << "source,x,y_centerline,diameter,deficit\n";
        for (const auto& wake : wakes_)
            for (const auto& e : wake)
                out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", e.source, e.x_station, e.centerline_y,
                                   e.diameter, e.centerline_deficit);
    }

    double initial_skew_angle(double a, double yaw)
    {
        const double c = std::cos(yaw);
        return 0.5 * thrust_coefficient(a) * c * c * std::sin(yaw);
    }

    WakeElement emit_wake_element(std::size_t source, const TurbineState& state, const TurbineInput& input,
                                  const Vec2& effective_wind, const Vec2& free_stream, const TurbineSpec& spec)
    {
        const double un = std::max(0.0, effective_wind.dot(rotor_axis(input.yaw)));
        WakeElement e;
        e.source = source;
        e.x_station = state.x;
        e.centerline_y = state.y;
        e.diameter = spec.rotor_diameter;
        e.rotor_diameter = spec.rotor_diameter;
        e.centerline_deficit = 2.0 * input.a * un;
        e.initial_deficit = e.centerline_deficit;
        e.skew_tangent = std::tan(initial_skew_angle(input.a, input.yaw));
        const double advection = free_stream.x() - 0.5 * e.centerline_deficit;
        e.lateral_velocity = advection * e.skew_tangent + free_stream.y();
        return e;
    }

    void advect_wakes(WakeField& field, const Vec2& wind, double dt, const WakeParams& params)
    {
        for (auto& wake : field.wakes_)
        {
            for (auto& e : wake)
            {
                const double advection = std::max(0.0, wind.x() - 0.5 * e.centerline_deficit);
                const double dx = advection * dt;
                e.x_station += dx;
                e.centerline_y += e.lateral_velocity * dt;
                e.travel += dx;
                e.age += dt;

                const double growth = 1.0 + 2.0 * params.expansion_rate * e.travel / e.rotor_diameter;
                e.diameter = e.rotor_diameter * growth;
                e.centerline_deficit = e.initial_deficit / (growth * growth);
                const double skew = e.skew_tangent / (growth * growth);
                e.lateral_velocity = std::max(0.0, wind.x() - 0.5 * e.centerline_deficit) * skew + wind.y();
            }
            // A fast element may not overtake the slower one ahead of it.
            for (std::size_t k = wake.size(); k-- > 1;)
                wake[k - 1].x_station = std::min(wake[k - 1].x_station, wake[k].x_station - kMinSeparation);

            while (!wake.empty() && wake.back().travel > params.cutoff_diameters * wake.back().rotor_diameter)
                wake.pop_back();
        }
    }

    double deficit_at(const WakeField& field, const Vec2& probe, std::optional<std::size_t> exclude)
    {
        double sum_sq = 0.0;
        for (std::size_t s = 0; s < field.sources(); ++s)
        {
            if (exclude && *exclude == s)
                continue;
            const auto& wake = field.wake(s);
            if (wake.size() < 2 || probe.x() < wake.front().x_station || probe.x() > wake.back().x_station)
                continue;
            auto upper = std::upper_bound(wake.begin(), wake.end(), probe.x(),
                                          [](double x, const WakeElement& e) { return x < e.x_station; });
            if (upper == wake.end())
                upper = std::prev(wake.end());
            const auto lower = std::prev(upper);
            const double span = upper->x_station - lower->x_station;
            const double f = span > 0.0 ? (probe.x() - lower->x_station) / span : 0.0;
            const double yc = lower->centerline_y + f * (upper->centerline_y - lower->centerline_y);
            const double diameter = lower->diameter + f * (upper->diameter - lower->diameter);
            const double peak = lower->centerline_deficit + f * (upper->centerline_deficit - lower->centerline_deficit);
            const double sigma = 0.25 * diameter;
            const double r = probe.y() - yc;
            const double d = peak * std::exp(-r * r / (2.0 * sigma * sigma));
            sum_sq += d * d;
        }
        return std::sqrt(sum_sq);
    }

    Vec2 effective_velocity(const WakeField& field, std::size_t turbine, std::span<const TurbineState> states,
                            const Vec2& wind, const TurbineSpec& spec, int samples)
    {
        const TurbineState& s = states[turbine];
        double total = 0.0;
        for (int q = 0; q < samples; ++q)
        {
            const double frac = samples > 1 ? static_cast<double>(q) / (samples - 1) - 0.5 : 0.0;
            total += deficit_at(field, Vec2(s.x, s.y + frac * spec.rotor_diameter), turbine);
        }
        const double mean = total / samples;
        return {std::max(0.0, wind.x() - mean), wind.y()};
    }

    FarmSimulator::FarmSimulator(FarmConfig cfg, SimulationParams params)
        : cfg_(std::move(cfg)), params_(params), wakes_(cfg_.size()), since_emission_(params.wake.emission_period)
    {
        cfg_.validate();
        states_.reserve(cfg_.size());
        for (const auto& t : cfg_.turbines)
            states_.push_back({t.neutral.x(), t.neutral.y(), 0.0, 0.0});
    }

    void FarmSimulator::set_states(std::vector<TurbineState> states)
    {
        if (states.size() != cfg_.size())
            throw ConfigError("state count does not match farm size");
        states_ = std::move(states);
    }

    std::vector<Vec2> FarmSimulator::effective_velocities(const Vec2& wind) const
    {
        std::vector<Vec2> out;
        out.reserve(states_.size());
        for (std::size_t i = 0; i < states_.size(); ++i)
            out.push_back(effective_velocity(wakes_, i, states_, wind, cfg_.turbines[i].spec, params_.wake.rotor_samples));
        return out;
    }

    std::vector<double> FarmSimulator::powers(std::span<const TurbineInput> inputs, const Vec2& wind) const
    {
        const auto eff = effective_velocities(wind);
        std::vector<double> p;
        p.reserve(states_.size());
        for (std::size_t i = 0; i < states_.size(); ++i)
            p.push_back(power_output(eff[i] - states_[i].velocity(), inputs[i], cfg_.turbines[i].spec));
        return p;
    }

    FarmStepResult FarmSimulator::step(std::span<const TurbineInput> inputs, const Vec2& wind, double dt)
    {
        if (inputs.size() != states_.size())
            throw ConfigError("input count does not match farm size");

        FarmStepResult result;
        result.effective_wind = effective_velocities(wind);
        result.power.reserve(states_.size());
        for (std::size_t i = 0; i < states_.size(); ++i)
            result.power.push_back(
                power_output(result.effective_wind[i] - states_[i].velocity(), inputs[i], cfg_.turbines[i].spec));

        for (std::size_t i = 0; i < states_.size(); ++i)
            states_[i] = step_platform(states_[i], inputs[i], result.effective_wind[i], cfg_.turbines[i], dt);

        advect_wakes(wakes_, wind, dt, params_.wake);

        since_emission_ += dt;
        if (since_emission_ >= params_.wake.emission_period - 1e-9)
        {
            since_emission_ = 0.0;
            for (std::size_t i = 0; i < states_.size(); ++i)
                wakes_.emit(emit_wake_element(i, states_[i], inputs[i], wind, wind, cfg_.turbines[i].spec));
        }
        time_ += dt;
        return result;
    }

    FarmStepResult step_farm(FarmSimulator& sim, std::span<const TurbineInput> inputs, const Vec2& wind, double dt)
    {
        return sim.step(inputs, wind, dt);
    }
} // namespace fowf
