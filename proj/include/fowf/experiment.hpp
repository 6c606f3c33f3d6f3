#pragma once

#include "fowf/dempc.hpp"
#include "fowf/farm.hpp"
#include "fowf/surrogate.hpp"
#include "fowf/wind.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fowf
{
    enum class ControlMode
    {
        Greedy,
        Dempc,
    };

    std::string to_string(ControlMode mode);
    ControlMode parse_control_mode(const std::string& text);

    struct ExperimentSpec
    {
        std::size_t farm_size = 2;
        double spacing_diameters = 7.0;
        double sigma = 0.05; // fraction of the mean wind speed
        double duration = 3600.0;
        double settle_time = 2000.0;
        Vec2 base_wind{8.0, 0.0};
        std::uint64_t wind_seed = 1;
        std::uint64_t controller_seed = 1;
        std::uint64_t training_seed = 1;
        ControlMode mode = ControlMode::Greedy;
        ControllerConfig controller;
        SimulationParams sim;
        std::filesystem::path models_dir; // per-turbine surrogates, see surrogate_path

        void validate() const;
    };

    /// Location of turbine `turbine`'s surrogate for a 1×n row farm.
    std::filesystem::path surrogate_path(const std::filesystem::path& dir, std::size_t farm_size, std::size_t turbine);

    std::vector<SurrogateModel> load_surrogates(const std::filesystem::path& dir, std::size_t farm_size);

    struct ControllerRecord
    {
        std::size_t period = 0;
        std::size_t agent = 0;
        AgentPeriodLog entry;
    };

    struct SimulationLog
    {
        ExperimentSpec spec;
        FarmConfig farm;
        WindSeries wind_series;
        std::vector<double> times{};
        std::vector<std::vector<TurbineState>> states{};
        std::vector<std::vector<TurbineInput>> inputs{};
        std::vector<std::vector<double>> powers{};
        std::vector<double> total_power{};
        std::vector<Vec2> wind{};
        std::vector<ControllerRecord> controller{};
        double energy = 0.0; // J

        std::size_t samples() const { return times.size(); }
        /// Mean of x - neutral x over the logged samples, per turbine.
        std::vector<double> mean_downwind_displacement() const;
        std::vector<double> mean_crosswind_displacement() const;
        /// Fraction of (period, agent) records with a final-iteration conflict, per agent then averaged.
        double conflict_rate() const;
        /// Fraction of periods in which any agent raised a final-iteration conflict.
        double period_conflict_rate() const;
        double mean_agent_wall_seconds() const;
    };

    double trapezoid_energy(std::span<const double> times, std::span<const double> power);

    SimulationLog run_closed_loop(const ExperimentSpec& spec);
    /// Same as above with the surrogates supplied directly (ignored in greedy mode).
    SimulationLog run_closed_loop(const ExperimentSpec& spec, const std::vector<SurrogateModel>& models);

    /// 100 (E_dempc - E_greedy) / E_greedy.
    double energy_gain(const SimulationLog& dempc, const SimulationLog& greedy);

    enum class SweepAxis
    {
        Sigma,
        Size,
    };

    SweepAxis parse_sweep_axis(const std::string& text);

    struct SweepPoint
    {
        std::size_t farm_size = 0;
        double sigma = 0.0;
        double greedy_energy = 0.0;
        double dempc_energy = 0.0;
        double gain = 0.0;
        std::vector<double> mean_abs_y{};
        std::vector<double> mean_downwind{};
        double conflict_rate = 0.0;
        std::string error{}; // empty on success
    };

    /// Paired greedy/DEMPC runs along one axis; failed points keep their error text and the sweep continues.
    std::vector<SweepPoint> sweep(const ExperimentSpec& base, SweepAxis axis, std::size_t workers);
    void write_sweep_csv(std::span<const SweepPoint> points, const std::filesystem::path& path);

    /// states.csv, power.csv, controller.csv, wind.csv and summary.json; `paired` adds the energy gain.
    void export_run(const SimulationLog& log, const std::filesystem::path& dir,
                    const SimulationLog* paired_greedy = nullptr);

    /// Worker count from FOWF_WORKERS, defaulting to the hardware concurrency.
    std::size_t workers_from_env();
} // namespace fowf
