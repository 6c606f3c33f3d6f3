#pragma once

#include "fowf/farm.hpp"

#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace fowf
{
    struct WakeParams
    {
        double expansion_rate = 0.05;   // k_w
        double cutoff_diameters = 20.0; // elements older than this travel distance are dropped
        double emission_period = 2.0;   // s
        int rotor_samples = 9;          // crosswind quadrature points for the rotor average
    };

    /// A transported wake cross-section.
    struct WakeElement
    {
        std::size_t source = 0;
        double x_station = 0.0;
        double centerline_y = 0.0;
        double diameter = 0.0;
        double centerline_deficit = 0.0; // m/s
        double lateral_velocity = 0.0;   // m/s
        double age = 0.0;                // s

        double rotor_diameter = 0.0; // diameter at emission
        double initial_deficit = 0.0;
        double skew_tangent = 0.0; // tan of the initial skew angle
        double travel = 0.0;       // streamwise distance from the source rotor
    };

    /// Per-source element sequences, each ordered by increasing x_station.
    class WakeField
    {
    public:
        WakeField() = default;
        explicit WakeField(std::size_t sources) : wakes_(sources) {}

        std::size_t sources() const { return wakes_.size(); }
        const std::deque<WakeElement>& wake(std::size_t source) const { return wakes_.at(source); }
        std::size_t element_count() const;

        /// Adds a freshly emitted element; rejected when it would break station ordering.
        bool emit(const WakeElement& element);

        friend void advect_wakes(WakeField& field, const Vec2& wind, double dt, const WakeParams& params);

        void write_csv(const std::filesystem::path& path) const;

    private:
        std::vector<std::deque<WakeElement>> wakes_;
    };

    /// Initial wake skew angle (rad) of a yawed actuator disc.
    double initial_skew_angle(double a, double yaw);

    WakeElement emit_wake_element(std::size_t source, const TurbineState& state, const TurbineInput& input,
                                  const Vec2& effective_wind, const Vec2& free_stream, const TurbineSpec& spec);

    /// Moves every element downstream, grows and weakens it, and prunes old elements.
    void advect_wakes(WakeField& field, const Vec2& wind, double dt, const WakeParams& params = {});

    /// Combined (root-sum-square) Gaussian deficit at a probe from every wake except `exclude`.
    double deficit_at(const WakeField& field, const Vec2& probe, std::optional<std::size_t> exclude = std::nullopt);

    /// Rotor-averaged incident wind of one turbine.
    Vec2 effective_velocity(const WakeField& field, std::size_t turbine, std::span<const TurbineState> states,
                            const Vec2& wind, const TurbineSpec& spec, int samples = 9);

    struct FarmStepResult
    {
        std::vector<double> power;        // W, per turbine, at the start of the step
        std::vector<Vec2> effective_wind; // per turbine, at the start of the step
    };

    struct SimulationParams
    {
        WakeParams wake;
        double dt = 1.0;
    };

    /// Coupled platform and wake simulation of a whole farm.
    class FarmSimulator
    {
    public:
        explicit FarmSimulator(FarmConfig cfg, SimulationParams params = {});

        const FarmConfig& config() const { return cfg_; }
        const SimulationParams& params() const { return params_; }
        const std::vector<TurbineState>& states() const { return states_; }
        const WakeField& wakes() const { return wakes_; }
        double time() const { return time_; }

        void set_states(std::vector<TurbineState> states);

        std::vector<Vec2> effective_velocities(const Vec2& wind) const;
        std::vector<double> powers(std::span<const TurbineInput> inputs, const Vec2& wind) const;

        /// One coupled step: incident winds, platform integration, wake advection, emission.
        FarmStepResult step(std::span<const TurbineInput> inputs, const Vec2& wind, double dt);
        FarmStepResult step(std::span<const TurbineInput> inputs, const Vec2& wind) { return step(inputs, wind, params_.dt); }

    private:
        FarmConfig cfg_;
        SimulationParams params_;
        std::vector<TurbineState> states_;
        WakeField wakes_;
        double time_ = 0.0;
        double since_emission_;
    };

    /// Free-function form of FarmSimulator::step.
    FarmStepResult step_farm(FarmSimulator& sim, std::span<const TurbineInput> inputs, const Vec2& wind, double dt);
} // namespace fowf
