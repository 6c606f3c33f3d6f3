#pragma once

#include "fowf/farm.hpp"
#include "fowf/surrogate.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace fowf
{
    struct TerminalTolerance
    {
        double position = 5.0;  // m
        double velocity = 0.05; // m/s
    };

    struct ControllerConfig
    {
        std::size_t horizon = 5;
        int levels = 2;
        std::size_t iterations_per_phase = 3;
        InputWeight q = InputWeight::Identity();
        double sampling_period = 60.0;
        double yaw_bound = deg_to_rad(10.0);
        double a_fixed = kGreedyInduction;
        TerminalTolerance terminal;
        double conflict_tolerance = 1e-6;

        double yaw_grid_step = deg_to_rad(1.0);
        std::size_t fixed_point_iterations = 200;
        double fixed_point_position_tol = 0.1;   // m
        double fixed_point_velocity_tol = 1e-3;  // m/s
        double terminal_weight = 1e3;            // mu
        double terminal_position_scale = 100.0;  // m
        double terminal_velocity_scale = 1.0;    // m/s
        std::size_t max_solver_iterations = 50;
        double fd_step = 1e-4;                   // rad
        double min_cost_decrease = 1e-6;

        void validate() const;
    };

    /// One-step state map used by an agent. The surrogate adapter is the production model;
    /// tests plug in exact synthetic maps.
    class TransitionModel
    {
    public:
        virtual ~TransitionModel() = default;
        virtual TurbineState predict(const TurbineState& state, const TurbineInput& input) const = 0;
    };

    class SurrogateTransition final : public TransitionModel
    {
    public:
        explicit SurrogateTransition(SurrogateModel model) : model_(std::move(model)) {}
        TurbineState predict(const TurbineState& state, const TurbineInput& input) const override
        {
            return predict_next_state(model_, state, input);
        }
        const SurrogateModel& model() const { return model_; }

    private:
        SurrogateModel model_;
    };

    struct AgentPlan
    {
        std::size_t owner = 0;
        std::vector<TurbineState> states; // H + 1
        std::vector<TurbineInput> inputs; // H
        TurbineState stationary_state;
        TurbineInput stationary_input;
        int level = 1;
        double naive_cost = 0.0;
        double stationary_cost = 0.0;
        bool terminal_met = false;
        double terminal_residual = 0.0; // max of scaled lateral position/velocity errors, 1 = on the tolerance
    };

    /// Plan that holds `measured` over the horizon with greedy inputs.
    AgentPlan hold_plan(std::size_t owner, const TurbineState& measured, const ControllerConfig& cfg);

    std::vector<TurbineState> simulate_plan(const TransitionModel& model, const TurbineState& x0,
                                            std::span<const TurbineInput> inputs);

    /// Per-agent inboxes; a plan published by agent i reaches only the neighbours of i.
    class MessageBus
    {
    public:
        explicit MessageBus(std::vector<std::vector<std::size_t>> adjacency);

        void publish(const AgentPlan& plan);
        std::vector<AgentPlan> receive(std::size_t agent);
        std::size_t pending(std::size_t agent) const { return inbox_.at(agent).size(); }
        const std::vector<std::size_t>& neighbors(std::size_t agent) const { return adjacency_.at(agent); }

    private:
        std::vector<std::vector<std::size_t>> adjacency_;
        std::vector<std::deque<AgentPlan>> inbox_;
    };

    /// Stage cost of one neighbourhood: own input deviation plus shared overlap and neighbour input terms.
    double local_stage_cost(const TurbineState& own_state, const TurbineInput& own_input,
                            std::span<const TurbineState> neighbor_states, std::span<const TurbineInput> neighbor_inputs,
                            double rotor_diameter, const InputWeight& q);

    struct StationaryCandidate
    {
        double yaw = 0.0;
        TurbineState state;
        bool converged = false;
        std::size_t iterations = 0;
    };

    /// Fixed point x = f(x, u) for u = (a_fixed, yaw), started from `start`. Fixed-point iteration first,
    /// then Newton polishing with a finite-difference Jacobian when the iteration has not settled.
    StationaryCandidate stationary_point(const TransitionModel& model, const TurbineState& start, double yaw,
                                         const ControllerConfig& cfg);

    /// Fixed points of every yaw on the grid, ordered by yaw.
    std::vector<StationaryCandidate> stationary_candidates(const TransitionModel& model, const TurbineState& start,
                                                           const ControllerConfig& cfg);

    double stationary_cost(const StationaryCandidate& c, std::span<const AgentPlan> neighbors, double rotor_diameter,
                           const ControllerConfig& cfg);

    struct StationarySolution
    {
        TurbineState state;
        TurbineInput input;
        double cost = 0.0;
        bool converged = false;
        std::vector<std::size_t> ranking; // candidate indices, best first
    };

    /// Best converged candidate; ties go to the smaller |yaw|, then to positive yaw.
    StationarySolution select_stationary(std::span<const StationaryCandidate> candidates,
                                         std::span<const AgentPlan> neighbors, double rotor_diameter,
                                         const ControllerConfig& cfg);

    StationarySolution solve_stationary(const TransitionModel& model, const TurbineState& x_measured,
                                        std::span<const AgentPlan> neighbors, double rotor_diameter,
                                        const ControllerConfig& cfg);

    struct DynamicProblem
    {
        const TransitionModel* model = nullptr;
        std::size_t owner = 0;
        TurbineState measured;
        TurbineState target;
        TurbineInput target_input;
        std::span<const AgentPlan> neighbors;
        double rotor_diameter = 126.0;
        bool stage_costs = true; // false: terminal penalty only (reachability test)
    };

    /// Stage sum over the horizon using neighbours' assumed trajectories at matching steps.
    double trajectory_stage_cost(std::span<const TurbineState> states, std::span<const TurbineInput> inputs,
                                 std::span<const AgentPlan> neighbors, double rotor_diameter,
                                 const ControllerConfig& cfg);

    double terminal_penalty(const TurbineState& end, const TurbineState& target, const ControllerConfig& cfg);
    double terminal_residual(const TurbineState& end, const TurbineState& target, const ControllerConfig& cfg);

    /// Projected finite-difference gradient descent on the horizon yaw sequence.
    AgentPlan solve_dynamic(const DynamicProblem& problem, std::span<const TurbineInput> warm_start,
                            const ControllerConfig& cfg, std::vector<double>* objective_history = nullptr);

    double informed_cost(const AgentPlan& own, std::span<const AgentPlan> received, double rotor_diameter,
                         const ControllerConfig& cfg);
    double informed_stationary_cost(const AgentPlan& own, std::span<const AgentPlan> received, double rotor_diameter,
                                    const ControllerConfig& cfg);

    int update_hierarchy_level(int level, double naive, double informed, std::mt19937_64& rng,
                               const ControllerConfig& cfg);

    struct AgentPeriodLog
    {
        int level = 1;
        double naive_cost = 0.0;
        double informed_cost = 0.0;
        bool conflict = false; // either phase, final iteration
        bool stationary_conflict = false;
        bool dynamic_conflict = false;
        std::size_t conflict_count = 0; // over every iteration of both phases
        bool solver_failed = false;
        double yaw = 0.0;
        TurbineState stationary_state;
        double terminal_residual = 0.0;
        double wall_seconds = 0.0;
    };

    /// The DEMPC agents of one farm.
    class Coordinator
    {
    public:
        Coordinator(const FarmConfig& farm, std::vector<std::shared_ptr<const TransitionModel>> models,
                    ControllerConfig cfg, std::uint64_t seed);

        /// Runs both coordination phases for one sampling period and returns u_{i,0} for every agent.
        std::vector<TurbineInput> coordinate_sampling_period(std::span<const TurbineState> measurements);

        const std::vector<AgentPeriodLog>& last_log() const { return log_; }
        const std::vector<AgentPlan>& plans() const { return plans_; }
        std::vector<int> levels() const;
        void set_levels(std::span<const int> levels);
        std::size_t period() const { return period_; }
        const ControllerConfig& config() const { return cfg_; }

    private:
        struct Agent
        {
            std::size_t index = 0;
            std::shared_ptr<const TransitionModel> model;
            std::mt19937_64 rng;
            int level = 1;
            double rotor_diameter = 126.0;
            std::vector<AgentPlan> known; // latest plan of each neighbour, in adjacency order
            std::vector<StationaryCandidate> candidates;
            std::vector<std::optional<bool>> reachable;
            bool has_setpoint = false;
        };

        void deliver(Agent& agent);
        bool candidate_reachable(Agent& agent, std::size_t k, const TurbineState& measured);
        void stationary_step(Agent& agent, const TurbineState& measured);
        void dynamic_step(Agent& agent, const TurbineState& measured);
        std::size_t neighbor_slot(const Agent& agent, std::size_t owner) const;

        FarmConfig farm_;
        ControllerConfig cfg_;
        MessageBus bus_;
        std::vector<Agent> agents_;
        std::vector<AgentPlan> plans_;
        std::vector<TurbineInput> committed_;
        std::vector<AgentPeriodLog> log_;
        std::size_t period_ = 0;
    };
} // namespace fowf
