#include "fowf/experiment.hpp"

#include "fowf/dynamics.hpp"
#include "fowf/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <thread>

namespace fowf
{
    std::string to_string(ControlMode mode) { return mode == ControlMode::Greedy ? "greedy" : "dempc"; }

    ControlMode parse_control_mode(const std::string& text)
    {
        if (text == "greedy")
            return ControlMode::Greedy;
        if (text == "dempc")
            return ControlMode::Dempc;
        throw ConfigError("unknown control mode '" + text + "'");
    }

    SweepAxis parse_sweep_axis(const std::string& text)
    {
        if (text == "sigma")
            return SweepAxis::Sigma;
        if (text == "size")
            return SweepAxis::Size;
        throw ConfigError("unknown sweep axis '" + text + "'");
    }

    void ExperimentSpec::validate() const
    {
        if (farm_size < 1)
            throw ConfigError("farm size must be at least 1");
        if (!(sigma >= 0.0 && sigma <= 1.0))
            throw ConfigError("sigma must lie in [0, 1]");
        controller.validate();
        const double periods = duration / controller.sampling_period;
        if (!(duration > 0.0) || std::abs(periods - std::round(periods)) > 1e-9)
            throw ConfigError("duration must be a positive multiple of the sampling period");
        if (!(settle_time >= 0.0))
            throw ConfigError("settle time must be non-negative");
        const double steps = controller.sampling_period / sim.dt;
        if (std::abs(steps - std::round(steps)) > 1e-9)
            throw ConfigError("sampling period must be a multiple of the integrator step");
    }

    std::filesystem::path surrogate_path(const std::filesystem::path& dir, std::size_t farm_size, std::size_t turbine)
    {
        return dir / fmt::format("farm{}_turbine{}.json", farm_size, turbine);
    }

    std::vector<SurrogateModel> load_surrogates(const std::filesystem::path& dir, std::size_t farm_size)
    {
        std::vector<SurrogateModel> models;
        for (std::size_t i = 0; i < farm_size; ++i)
        {
            const auto path = surrogate_path(dir, farm_size, i);
            if (!std::filesystem::exists(path))
                throw ConfigError(fmt::format("missing surrogate model {} (run `train --farm-size {}` first)",
                                              path.string(), farm_size));
            models.push_back(load_surrogate(path));
        }
        return models;
    }

    double trapezoid_energy(std::span<const double> times, std::span<const double> power)
    {
        double e = 0.0;
        for (std::size_t k = 1; k < times.size(); ++k)
            e += 0.5 * (power[k] + power[k - 1]) * (times[k] - times[k - 1]);
        return e;
    }

    std::vector<double> SimulationLog::mean_downwind_displacement() const
    {
        std::vector<double> out(farm.size(), 0.0);
        for (const auto& row : states)
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] += (row[i].x - farm.turbines[i].neutral.x()) / static_cast<double>(states.size());
        return out;
    }

    std::vector<double> SimulationLog::mean_crosswind_displacement() const
    {
        std::vector<double> out(farm.size(), 0.0);
        for (const auto& row : states)
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] += (row[i].y - farm.turbines[i].neutral.y()) / static_cast<double>(states.size());
        return out;
    }

    double SimulationLog::conflict_rate() const
    {
        if (controller.empty())
            return 0.0;
        std::size_t hits = 0;
        for (const auto& r : controller)
            hits += r.entry.conflict ? 1 : 0;
        return static_cast<double>(hits) / static_cast<double>(controller.size());
    }

    double SimulationLog::period_conflict_rate() const
    {
        if (controller.empty())
            return 0.0;
        std::size_t periods = 0, hits = 0;
        for (std::size_t k = 0; k < controller.size();)
        {
            const std::size_t period = controller[k].period;
            bool any = false;
            for (; k < controller.size() && controller[k].period == period; ++k)
                any = any || controller[k].entry.conflict;
            ++periods;
            hits += any ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(periods);
    }

    double SimulationLog::mean_agent_wall_seconds() const
    {
        if (controller.empty())
            return 0.0;
        double total = 0.0;
        for (const auto& r : controller)
            total += r.entry.wall_seconds;
        return total / static_cast<double>(controller.size());
    }

    SimulationLog run_closed_loop(const ExperimentSpec& spec)
    {
        if (spec.mode == ControlMode::Dempc)
            return run_closed_loop(spec, load_surrogates(spec.models_dir, spec.farm_size));
        return run_closed_loop(spec, {});
    }

    SimulationLog run_closed_loop(const ExperimentSpec& spec, const std::vector<SurrogateModel>& models)
    {
        spec.validate();
        const FarmConfig farm = make_row_farm(spec.farm_size, spec.spacing_diameters);

        WindConfig wind_cfg;
        wind_cfg.base_velocity = spec.base_wind;
        wind_cfg.sigma = spec.sigma;
        wind_cfg.duration = spec.duration;
        wind_cfg.seed = spec.wind_seed;
        SimulationLog log{.spec = spec, .farm = farm, .wind_series = generate_wind_series(wind_cfg)};

        std::unique_ptr<Coordinator> coordinator;
        if (spec.mode == ControlMode::Dempc)
        {
            if (models.size() != spec.farm_size)
                throw ConfigError(fmt::format("dempc mode needs {} surrogate models, got {}", spec.farm_size,
                                              models.size()));
            std::vector<std::shared_ptr<const TransitionModel>> transitions;
            for (const auto& m : models)
                transitions.push_back(std::make_shared<SurrogateTransition>(m));
            coordinator = std::make_unique<Coordinator>(farm, std::move(transitions), spec.controller,
                                                        spec.controller_seed);
        }

        FarmSimulator sim =
            settled_greedy_farm(farm, sample_wind(log.wind_series, 0.0).velocity, spec.settle_time, spec.sim);

        const auto periods = static_cast<std::size_t>(std::llround(spec.duration / spec.controller.sampling_period));
        const auto steps_per_period =
            static_cast<std::size_t>(std::llround(spec.controller.sampling_period / spec.sim.dt));
        std::vector<TurbineInput> inputs(farm.size(), TurbineInput::greedy());

        auto record = [&](double t) {
            const Vec2 w = sample_wind(log.wind_series, t).velocity;
            log.times.push_back(t);
            log.states.push_back(sim.states());
            log.inputs.push_back(inputs);
            auto p = sim.powers(inputs, w);
            double total = 0.0;
            for (double v : p)
                total += v;
            log.powers.push_back(std::move(p));
            log.total_power.push_back(total);
            log.wind.push_back(w);
        };

        for (std::size_t k = 0; k < periods; ++k)
        {
            const double t0 = static_cast<double>(k) * spec.controller.sampling_period;
            if (coordinator)
            {
                inputs = coordinator->coordinate_sampling_period(sim.states());
                for (std::size_t i = 0; i < inputs.size(); ++i)
                    log.controller.push_back({k, i, coordinator->last_log()[i]});
            }
            record(t0);
            for (std::size_t s = 0; s < steps_per_period; ++s)
            {
                const double t = t0 + static_cast<double>(s) * spec.sim.dt;
                sim.step(inputs, sample_wind(log.wind_series, t).velocity);
            }
        }
        record(static_cast<double>(periods) * spec.controller.sampling_period);
        log.energy = trapezoid_energy(log.times, log.total_power);
        return log;
    }

    double energy_gain(const SimulationLog& dempc, const SimulationLog& greedy)
    {
        if (std::abs(dempc.spec.duration - greedy.spec.duration) > 1e-9 || dempc.times.size() != greedy.times.size())
            throw ConfigError("energy gain needs runs of equal duration");
        if (dempc.spec.wind_seed != greedy.spec.wind_seed || dempc.spec.sigma != greedy.spec.sigma)
            throw ConfigError("energy gain needs runs with the same wind");
        if (!(greedy.energy > 0.0))
            throw DomainError("greedy energy must be positive");
        return 100.0 * (dempc.energy - greedy.energy) / greedy.energy;
    }

    std::vector<SweepPoint> sweep(const ExperimentSpec& base, SweepAxis axis, std::size_t workers)
    {
        std::vector<SweepPoint> points;
        if (axis == SweepAxis::Sigma)
        {
            for (double s : {0.05, 0.10, 0.15, 0.20})
                points.push_back(SweepPoint{.farm_size = base.farm_size, .sigma = s});
        }
        else
        {
            for (std::size_t n = 2; n <= 5; ++n)
                points.push_back(SweepPoint{.farm_size = n, .sigma = base.sigma});
        }

        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t k = next++; k < points.size(); k = next++)
            {
                SweepPoint& p = points[k];
                try
                {
                    ExperimentSpec spec = base;
                    spec.farm_size = p.farm_size;
                    spec.sigma = p.sigma;
                    spec.mode = ControlMode::Greedy;
                    const SimulationLog greedy = run_closed_loop(spec);
                    spec.mode = ControlMode::Dempc;
                    const SimulationLog dempc = run_closed_loop(spec);
                    p.greedy_energy = greedy.energy;
                    p.dempc_energy = dempc.energy;
                    p.gain = energy_gain(dempc, greedy);
                    p.mean_downwind = dempc.mean_downwind_displacement();
                    for (double y : dempc.mean_crosswind_displacement())
                        p.mean_abs_y.push_back(std::abs(y));
                    p.conflict_rate = dempc.period_conflict_rate();
                }
                catch (const std::exception& e)
                {
                    p.error = e.what();
                }
            }
        };
        const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, points.size());
        std::vector<std::thread> pool;
        for (std::size_t t = 1; t < n_threads; ++t)
            pool.emplace_back(work);
        work();
        for (auto& th : pool)
            th.join();
        return points;
    }

    namespace
    {
        std::ofstream open_out(const std::filesystem::path& path)
        {
            std::ofstream out(path);
            if (!out)
                throw IoError("cannot write " + path.string());
            return out;
        }

        std::string join_doubles(std::span<const double> v, const char* fmtspec)
        {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i)
            {
                if (i)
                    s += ';';
                s += fmt::format(fmt::runtime(fmtspec), v[i]);
            }
            return s;
        }
    } // namespace

    void write_sweep_csv(std::span<const SweepPoint> points, const std::filesystem::path& path)
    {
        auto out = open_out(path);
        out << "point,farm_size,sigma,E_greedy_J,E_dempc_J,gain_pct,mean_abs_y_m,mean_downwind_m,conflict_rate,error\n";
        for (std::size_t k = 0; k < points.size(); ++k)
        {
            const auto& p = points[k];
            out << fmt::format("{},{},{:.2f},{:.6e},{:.6e},{:.4f},{},{},{:.4f},\"{}\"\n", k, p.farm_size, p.sigma,
                               p.greedy_energy, p.dempc_energy, p.gain, join_doubles(p.mean_abs_y, "{:.3f}"),
                               join_doubles(p.mean_downwind, "{:.3f}"), p.conflict_rate, p.error);
        }
    }

    void export_run(const SimulationLog& log, const std::filesystem::path& dir, const SimulationLog* paired_greedy)
    {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec)
            throw IoError("cannot create " + dir.string() + ": " + ec.message());
        const std::size_t n = log.farm.size();

        {
            auto out = open_out(dir / "states.csv");
            out << "t_s";
            for (std::size_t i = 0; i < n; ++i)
                out << fmt::format(",x{0}_m,y{0}_m,vx{0}_ms,vy{0}_ms", i);
            out << '\n';
            for (std::size_t k = 0; k < log.samples(); ++k)
            {
                out << fmt::format("{:.1f}", log.times[k]);
                for (const auto& s : log.states[k])
                    out << fmt::format(",{:.6f},{:.6f},{:.6f},{:.6f}", s.x, s.y, s.vx, s.vy);
                out << '\n';
            }
        }
        {
            auto out = open_out(dir / "power.csv");
            out << "t_s";
            for (std::size_t i = 0; i < n; ++i)
                out << fmt::format(",P{}_W", i);
            out << ",total_W\n";
            for (std::size_t k = 0; k < log.samples(); ++k)
            {
                out << fmt::format("{:.1f}", log.times[k]);
                for (double p : log.powers[k])
                    out << fmt::format(",{:.17g}", p);
                out << fmt::format(",{:.17g}\n", log.total_power[k]);
            }
        }
        {
            auto out = open_out(dir / "controller.csv");
            out << "period,agent,level,naive_cost,informed_cost,conflict_flag,yaw_deg,xs_m,ys_m,vxs_ms,vys_ms,"
                   "terminal_residual\n";
            for (const auto& r : log.controller)
            {
                const auto& e = r.entry;
                out << fmt::format("{},{},{},{:.9f},{:.9f},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.period,
                                   r.agent, e.level, e.naive_cost, e.informed_cost, e.conflict ? 1 : 0,
                                   rad_to_deg(e.yaw), e.stationary_state.x, e.stationary_state.y,
                                   e.stationary_state.vx, e.stationary_state.vy, e.terminal_residual);
            }
        }
        log.wind_series.write_csv(dir / "wind.csv");

        nlohmann::ordered_json j;
        j["mode"] = to_string(log.spec.mode);
        j["farm_size"] = log.spec.farm_size;
        j["spacing_diameters"] = log.spec.spacing_diameters;
        j["sigma"] = log.spec.sigma;
        j["duration_s"] = log.spec.duration;
        j["settle_time_s"] = log.spec.settle_time;
        j["seeds"] = {{"wind", log.spec.wind_seed},
                      {"controller", log.spec.controller_seed},
                      {"training", log.spec.training_seed}};
        j["energy_J"] = log.energy;
        j["samples"] = log.samples();
        j["mean_downwind_m"] = log.mean_downwind_displacement();
        j["mean_crosswind_m"] = log.mean_crosswind_displacement();
        if (log.spec.mode == ControlMode::Dempc)
        {
            j["conflict_rate"] = log.period_conflict_rate();
            j["mean_agent_wall_s"] = log.mean_agent_wall_seconds();
        }
        if (paired_greedy)
        {
            j["greedy_energy_J"] = paired_greedy->energy;
            j["gain_pct"] = energy_gain(log, *paired_greedy);
        }
        auto out = open_out(dir / "summary.json");
        out << j.dump(2) << '\n';
    }

    std::size_t workers_from_env()
    {
        if (const char* env = std::getenv("FOWF_WORKERS"))
        {
            char* end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (end != env && *end == '\0' && v > 0)
                return static_cast<std::size_t>(v);
            throw ConfigError(fmt::format("FOWF_WORKERS='{}' is not a positive integer", env));
        }
        return std::max(1u, std::thread::hardware_concurrency());
    }
} // namespace fowf
