#include "fowf/dempc.hpp"

#include "fowf/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace fowf
{
    void ControllerConfig::validate() const
    {
        if (horizon < 1)
            throw ConfigError("controller horizon must be at least 1");
        if (levels < 2)
            throw ConfigError("social hierarchy needs at least 2 levels");
        if (iterations_per_phase < 1)
            throw ConfigError("at least one iteration per phase is required");
        if (!(yaw_bound > 0.0) || !(yaw_grid_step > 0.0))
            throw ConfigError("yaw bound and grid step must be positive");
        if (!(a_fixed > 0.0 && a_fixed < 0.5))
            throw ConfigError("fixed induction factor outside (0, 0.5)");
        if (!(sampling_period > 0.0))
            throw ConfigError("sampling period must be positive");
    }

    AgentPlan hold_plan(std::size_t owner, const TurbineState& measured, const ControllerConfig& cfg)
    {
        AgentPlan p;
        p.owner = owner;
        p.states.assign(cfg.horizon + 1, measured);
        p.inputs.assign(cfg.horizon, TurbineInput{cfg.a_fixed, 0.0});
        p.stationary_state = measured;
        p.stationary_input = TurbineInput{cfg.a_fixed, 0.0};
        return p;
    }

    std::vector<TurbineState> simulate_plan(const TransitionModel& model, const TurbineState& x0,
                                            std::span<const TurbineInput> inputs)
    {
        std::vector<TurbineState> states;
        states.reserve(inputs.size() + 1);
        states.push_back(x0);
        for (const auto& u : inputs)
            states.push_back(model.predict(states.back(), u));
        return states;
    }

    MessageBus::MessageBus(std::vector<std::vector<std::size_t>> adjacency)
        : adjacency_(std::move(adjacency)), inbox_(adjacency_.size())
    {
    }

    void MessageBus::publish(const AgentPlan& plan)
    {
        for (std::size_t j : adjacency_.at(plan.owner))
            inbox_.at(j).push_back(plan);
    }

    std::vector<AgentPlan> MessageBus::receive(std::size_t agent)
    {
        auto& box = inbox_.at(agent);
        std::vector<AgentPlan> out(std::make_move_iterator(box.begin()), std::make_move_iterator(box.end()));
        box.clear();
        return out;
    }

    double local_stage_cost(const TurbineState& own_state, const TurbineInput& own_input,
                            std::span<const TurbineState> neighbor_states, std::span<const TurbineInput> neighbor_inputs,
                            double rotor_diameter, const InputWeight& q)
    {
        double cost = input_deviation_cost(own_input, q);
        if (neighbor_states.empty())
            return cost;
        const double share = 1.0 / static_cast<double>(neighbor_states.size());
        for (std::size_t j = 0; j < neighbor_states.size(); ++j)
            cost += share * rotor_overlap_area(own_state.y, neighbor_states[j].y, rotor_diameter) +
                    input_deviation_cost(neighbor_inputs[j], q);
        return cost;
    }

    namespace
    {
        using Vec4 = Eigen::Vector4d;

        Vec4 as_vec(const TurbineState& s) { return {s.x, s.y, s.vx, s.vy}; }
        TurbineState as_state(const Vec4& v) { return {v(0), v(1), v(2), v(3)}; }

        /// Residual scaled by the fixed-point tolerances; converged when every entry is below 1.
        Vec4 scaled(const Vec4& d, const ControllerConfig& cfg)
        {
            return {d(0) / cfg.fixed_point_position_tol, d(1) / cfg.fixed_point_position_tol,
                    d(2) / cfg.fixed_point_velocity_tol, d(3) / cfg.fixed_point_velocity_tol};
        }

        template <typename T>
        const T& at_step(const std::vector<T>& v, std::size_t k)
        {
            return v[std::min(k, v.size() - 1)];
        }
    } // namespace

    StationaryCandidate stationary_point(const TransitionModel& model, const TurbineState& start, double yaw,
                                         const ControllerConfig& cfg)
    {
        const TurbineInput u{cfg.a_fixed, yaw};
        StationaryCandidate c;
        c.yaw = yaw;
        Vec4 x = as_vec(start);
        auto residual = [&](const Vec4& v) { return Vec4(as_vec(model.predict(as_state(v), u)) - v); };

        bool settled = false;
        for (std::size_t it = 0; it < cfg.fixed_point_iterations && !settled; ++it)
        {
            const Vec4 next = as_vec(model.predict(as_state(x), u));
            ++c.iterations;
            settled = scaled(next - x, cfg).cwiseAbs().maxCoeff() < 1.0;
            x = next;
            if (!x.allFinite())
                return c;
        }

        // Newton polish to a start-independent point; also rescues slowly contracting modes.
        const Vec4 h(1e-3, 1e-3, 1e-5, 1e-5);
        double norm = scaled(residual(x), cfg).cwiseAbs().maxCoeff();
        for (int it = 0; it < 30 && norm > 1e-6; ++it)
        {
            const Vec4 g = residual(x);
            Eigen::Matrix4d jac;
            for (int k = 0; k < 4; ++k)
            {
                Vec4 xp = x, xm = x;
                xp(k) += h(k);
                xm(k) -= h(k);
                jac.col(k) = (residual(xp) - residual(xm)) / (2.0 * h(k));
            }
            const Vec4 dx = -jac.partialPivLu().solve(g);
            if (!dx.allFinite())
                break;
            double step = 1.0;
            bool improved = false;
            for (int bt = 0; bt < 20; ++bt, step *= 0.5)
            {
                const Vec4 trial = x + step * dx;
                const double n = scaled(residual(trial), cfg).cwiseAbs().maxCoeff();
                if (n < norm)
                {
                    x = trial;
                    norm = n;
                    improved = true;
                    break;
                }
            }
            if (!improved)
                break;
        }
        c.state = as_state(x);
        c.converged = settled || norm < 1.0;
        return c;
    }

    std::vector<StationaryCandidate> stationary_candidates(const TransitionModel& model, const TurbineState& start,
                                                           const ControllerConfig& cfg)
    {
        const auto half = static_cast<int>(std::floor(cfg.yaw_bound / cfg.yaw_grid_step + 1e-9));
        std::vector<StationaryCandidate> out;
        out.reserve(static_cast<std::size_t>(2 * half + 1));
        for (int k = -half; k <= half; ++k)
            out.push_back(stationary_point(model, start, k * cfg.yaw_grid_step, cfg));
        return out;
    }

    double stationary_cost(const StationaryCandidate& c, std::span<const AgentPlan> neighbors, double rotor_diameter,
                           const ControllerConfig& cfg)
    {
        std::vector<TurbineState> ns;
        std::vector<TurbineInput> nu;
        for (const auto& p : neighbors)
        {
            ns.push_back(p.stationary_state);
            nu.push_back(p.stationary_input);
        }
        return local_stage_cost(c.state, TurbineInput{cfg.a_fixed, c.yaw}, ns, nu, rotor_diameter, cfg.q);
    }

    StationarySolution select_stationary(std::span<const StationaryCandidate> candidates,
                                         std::span<const AgentPlan> neighbors, double rotor_diameter,
                                         const ControllerConfig& cfg)
    {
        std::vector<double> cost(candidates.size(), std::numeric_limits<double>::infinity());
        StationarySolution sol;
        for (std::size_t k = 0; k < candidates.size(); ++k)
        {
            if (!candidates[k].converged)
                continue;
            cost[k] = stationary_cost(candidates[k], neighbors, rotor_diameter, cfg);
            sol.ranking.push_back(k);
        }
        std::stable_sort(sol.ranking.begin(), sol.ranking.end(), [&](std::size_t a, std::size_t b) {
            if (std::abs(cost[a] - cost[b]) > 1e-12)
                return cost[a] < cost[b];
            const double ya = std::abs(candidates[a].yaw), yb = std::abs(candidates[b].yaw);
            if (std::abs(ya - yb) > 1e-12)
                return ya < yb;
            return candidates[a].yaw > candidates[b].yaw;
        });
        if (sol.ranking.empty())
            return sol;
        const auto& best = candidates[sol.ranking.front()];
        sol.state = best.state;
        sol.input = TurbineInput{cfg.a_fixed, best.yaw};
        sol.cost = cost[sol.ranking.front()];
        sol.converged = true;
        return sol;
    }

    StationarySolution solve_stationary(const TransitionModel& model, const TurbineState& x_measured,
                                        std::span<const AgentPlan> neighbors, double rotor_diameter,
                                        const ControllerConfig& cfg)
    {
        const auto candidates = stationary_candidates(model, x_measured, cfg);
        return select_stationary(candidates, neighbors, rotor_diameter, cfg);
    }

    double trajectory_stage_cost(std::span<const TurbineState> states, std::span<const TurbineInput> inputs,
                                 std::span<const AgentPlan> neighbors, double rotor_diameter,
                                 const ControllerConfig& cfg)
    {
        std::vector<TurbineState> ns(neighbors.size());
        std::vector<TurbineInput> nu(neighbors.size());
        double total = 0.0;
        for (std::size_t k = 0; k < inputs.size(); ++k)
        {
            for (std::size_t j = 0; j < neighbors.size(); ++j)
            {
                ns[j] = at_step(neighbors[j].states, k);
                nu[j] = at_step(neighbors[j].inputs, k);
            }
            total += local_stage_cost(states[k], inputs[k], ns, nu, rotor_diameter, cfg.q);
        }
        return total;
    }

    double terminal_penalty(const TurbineState& end, const TurbineState& target, const ControllerConfig& cfg)
    {
        auto excess = [](double error, double tol) { return std::max(0.0, std::abs(error) - tol); };
        const double pos = cfg.terminal.position, vel = cfg.terminal.velocity;
        const double px = excess(end.x - target.x, pos) / cfg.terminal_position_scale;
        const double py = excess(end.y - target.y, pos) / cfg.terminal_position_scale;
        const double vx = excess(end.vx - target.vx, vel) / cfg.terminal_velocity_scale;
        const double vy = excess(end.vy - target.vy, vel) / cfg.terminal_velocity_scale;
        return cfg.terminal_weight * (px * px + py * py + vx * vx + vy * vy + px + py + vx + vy);
    }

    double terminal_residual(const TurbineState& end, const TurbineState& target, const ControllerConfig& cfg)
    {
        return std::max(std::abs(end.y - target.y) / cfg.terminal.position,
                        std::abs(end.vy - target.vy) / cfg.terminal.velocity);
    }

    AgentPlan solve_dynamic(const DynamicProblem& problem, std::span<const TurbineInput> warm_start,
                            const ControllerConfig& cfg, std::vector<double>* objective_history)
    {
        if (!problem.model)
            throw ConfigError("dynamic problem has no transition model");
        const std::size_t n = cfg.horizon;
        const double bound = cfg.yaw_bound;
        auto project = [bound](double v) { return std::clamp(v, -bound, bound); };

        Eigen::VectorXd yaw(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k)
            yaw(static_cast<Eigen::Index>(k)) =
                project(k < warm_start.size() ? warm_start[k].yaw
                                              : (warm_start.empty() ? problem.target_input.yaw : warm_start.back().yaw));

        std::vector<TurbineInput> inputs(n, TurbineInput{cfg.a_fixed, 0.0});
        auto objective = [&](const Eigen::VectorXd& g) {
            for (std::size_t k = 0; k < n; ++k)
                inputs[k].yaw = g(static_cast<Eigen::Index>(k));
            const auto states = simulate_plan(*problem.model, problem.measured, inputs);
            double j = terminal_penalty(states.back(), problem.target, cfg);
            if (problem.stage_costs)
                j += trajectory_stage_cost(states, inputs, problem.neighbors, problem.rotor_diameter, cfg);
            return j;
        };

        double current = objective(yaw);
        if (!std::isfinite(current))
            throw DivergedError("dynamic objective is not finite at the warm start");
        if (objective_history)
            objective_history->push_back(current);

        double step = bound;
        Eigen::VectorXd grad(static_cast<Eigen::Index>(n));
        for (std::size_t it = 0; it < cfg.max_solver_iterations; ++it)
        {
            for (Eigen::Index k = 0; k < grad.size(); ++k)
            {
                Eigen::VectorXd plus = yaw, minus = yaw;
                plus(k) += cfg.fd_step;
                minus(k) -= cfg.fd_step;
                grad(k) = (objective(plus) - objective(minus)) / (2.0 * cfg.fd_step);
                if ((yaw(k) >= bound && grad(k) < 0.0) || (yaw(k) <= -bound && grad(k) > 0.0))
                    grad(k) = 0.0;
            }
            const double gmax = grad.cwiseAbs().maxCoeff();
            if (!(gmax > 0.0) || !std::isfinite(gmax))
                break;

            double alpha = step / gmax;
            bool accepted = false;
            Eigen::VectorXd trial;
            double trial_cost = current;
            for (int bt = 0; bt < 40; ++bt, alpha *= 0.5)
            {
                trial = (yaw - alpha * grad).unaryExpr(project);
                trial_cost = objective(trial);
                if (trial_cost < current)
                {
                    accepted = true;
                    break;
                }
            }
            if (!accepted)
                break;
            const double decrease = current - trial_cost;
            step = std::min(bound, 2.0 * (trial - yaw).cwiseAbs().maxCoeff());
            yaw = trial;
            current = trial_cost;
            if (objective_history)
                objective_history->push_back(current);
            if (decrease < cfg.min_cost_decrease || !(step > 0.0))
                break;
        }

        AgentPlan plan;
        plan.owner = problem.owner;
        for (std::size_t k = 0; k < n; ++k)
            inputs[k].yaw = yaw(static_cast<Eigen::Index>(k));
        plan.inputs = inputs;
        plan.states = simulate_plan(*problem.model, problem.measured, inputs);
        plan.stationary_state = problem.target;
        plan.stationary_input = problem.target_input;
        plan.naive_cost = trajectory_stage_cost(plan.states, plan.inputs, problem.neighbors, problem.rotor_diameter, cfg);
        plan.terminal_residual = terminal_residual(plan.states.back(), problem.target, cfg);
        plan.terminal_met = plan.terminal_residual <= 1.0;
        return plan;
    }

    double informed_cost(const AgentPlan& own, std::span<const AgentPlan> received, double rotor_diameter,
                         const ControllerConfig& cfg)
    {
        return trajectory_stage_cost(own.states, own.inputs, received, rotor_diameter, cfg);
    }

    double informed_stationary_cost(const AgentPlan& own, std::span<const AgentPlan> received, double rotor_diameter,
                                    const ControllerConfig& cfg)
    {
        StationaryCandidate c;
        c.state = own.stationary_state;
        c.yaw = own.stationary_input.yaw;
        return stationary_cost(c, received, rotor_diameter, cfg);
    }

    int update_hierarchy_level(int level, double naive, double informed, std::mt19937_64& rng,
                               const ControllerConfig& cfg)
    {
        if (informed <= naive + cfg.conflict_tolerance)
            return level;
        return std::uniform_int_distribution<int>(1, cfg.levels)(rng);
    }

    Coordinator::Coordinator(const FarmConfig& farm, std::vector<std::shared_ptr<const TransitionModel>> models,
                             ControllerConfig cfg, std::uint64_t seed)
        : farm_(farm), cfg_(std::move(cfg)), bus_(farm.adjacency)
    {
        farm_.validate();
        cfg_.validate();
        if (models.size() != farm_.size())
            throw ConfigError("one transition model per turbine is required");
        agents_.resize(farm_.size());
        for (std::size_t i = 0; i < agents_.size(); ++i)
        {
            Agent& a = agents_[i];
            if (!models[i])
                throw ConfigError("missing transition model");
            a.index = i;
            a.model = std::move(models[i]);
            a.rng.seed(seed + i);
            a.level = std::uniform_int_distribution<int>(1, cfg_.levels)(a.rng);
            a.rotor_diameter = farm_.turbines[i].spec.rotor_diameter;
        }
        plans_.resize(farm_.size());
        committed_.assign(farm_.size(), TurbineInput{cfg_.a_fixed, 0.0});
    }

    std::vector<int> Coordinator::levels() const
    {
        std::vector<int> out;
        for (const auto& a : agents_)
            out.push_back(a.level);
        return out;
    }

    void Coordinator::set_levels(std::span<const int> levels)
    {
        if (levels.size() != agents_.size())
            throw ConfigError("level count does not match agent count");
        for (std::size_t i = 0; i < agents_.size(); ++i)
        {
            if (levels[i] < 1 || levels[i] > cfg_.levels)
                throw ConfigError("hierarchy level out of range");
            agents_[i].level = levels[i];
        }
    }

    std::size_t Coordinator::neighbor_slot(const Agent& agent, std::size_t owner) const
    {
        const auto& nbrs = bus_.neighbors(agent.index);
        const auto it = std::find(nbrs.begin(), nbrs.end(), owner);
        if (it == nbrs.end())
            throw ConfigError("received a plan from a non-neighbour");
        return static_cast<std::size_t>(it - nbrs.begin());
    }

    void Coordinator::deliver(Agent& agent)
    {
        for (auto& plan : bus_.receive(agent.index))
        {
            const std::size_t slot = neighbor_slot(agent, plan.owner);
            agent.known[slot] = std::move(plan);
        }
    }

    bool Coordinator::candidate_reachable(Agent& agent, std::size_t k, const TurbineState& measured)
    {
        if (!agent.reachable[k])
        {
            const auto& c = agent.candidates[k];
            DynamicProblem p;
            p.model = agent.model.get();
            p.owner = agent.index;
            p.measured = measured;
            p.target = c.state;
            p.target_input = TurbineInput{cfg_.a_fixed, c.yaw};
            p.rotor_diameter = agent.rotor_diameter;
            p.stage_costs = false;
            const std::vector<TurbineInput> warm(cfg_.horizon, p.target_input);
            agent.reachable[k] = solve_dynamic(p, warm, cfg_).terminal_met;
        }
        return *agent.reachable[k];
    }

    void Coordinator::stationary_step(Agent& agent, const TurbineState& measured)
    {
        AgentPlan& plan = plans_[agent.index];
        const auto sol = select_stationary(agent.candidates, agent.known, agent.rotor_diameter, cfg_);
        for (std::size_t k : sol.ranking)
        {
            if (candidate_reachable(agent, k, measured))
            {
                plan.stationary_state = agent.candidates[k].state;
                plan.stationary_input = TurbineInput{cfg_.a_fixed, agent.candidates[k].yaw};
                agent.has_setpoint = true;
                break;
            }
        }
        // No reachable candidate: the previous set-point stays.
        plan.stationary_cost = informed_stationary_cost(plan, agent.known, agent.rotor_diameter, cfg_);
    }

    void Coordinator::dynamic_step(Agent& agent, const TurbineState& measured)
    {
        AgentPlan& plan = plans_[agent.index];
        DynamicProblem p;
        p.model = agent.model.get();
        p.owner = agent.index;
        p.measured = measured;
        p.target = plan.stationary_state;
        p.target_input = plan.stationary_input;
        p.neighbors = agent.known;
        p.rotor_diameter = agent.rotor_diameter;
        AgentPlan next = solve_dynamic(p, plan.inputs, cfg_);
        next.level = agent.level;
        next.stationary_cost = plan.stationary_cost;
        plan = std::move(next);
    }

    std::vector<TurbineInput> Coordinator::coordinate_sampling_period(std::span<const TurbineState> measurements)
    {
        using Clock = std::chrono::steady_clock;
        const std::size_t n = agents_.size();
        if (measurements.size() != n)
            throw ConfigError("measurement count does not match agent count");

        log_.assign(n, AgentPeriodLog{});
        std::vector<double> wall(n, 0.0);
        std::vector<bool> failed(n, false);
        auto timed = [&](std::size_t i, auto&& fn) {
            const auto t0 = Clock::now();
            try
            {
                fn();
            }
            catch (const Error&)
            {
                failed[i] = true;
            }
            wall[i] += std::chrono::duration<double>(Clock::now() - t0).count();
        };

        for (std::size_t i = 0; i < n; ++i)
        {
            Agent& a = agents_[i];
            AgentPlan& plan = plans_[i];
            if (period_ == 0)
            {
                plan = hold_plan(i, measurements[i], cfg_);
            }
            else
            {
                std::vector<TurbineInput> shifted(plan.inputs.begin() + 1, plan.inputs.end());
                shifted.push_back(plan.stationary_input);
                plan.inputs = std::move(shifted);
                plan.states = simulate_plan(*a.model, measurements[i], plan.inputs);
            }
            plan.owner = i;
            plan.level = a.level;
            a.known.clear();
            for (std::size_t j : bus_.neighbors(i))
                a.known.push_back(hold_plan(j, measurements[j], cfg_));
            timed(i, [&] { a.candidates = stationary_candidates(*a.model, measurements[i], cfg_); });
            a.reachable.assign(a.candidates.size(), std::nullopt);
        }
        for (std::size_t i = 0; i < n; ++i)
            bus_.publish(plans_[i]);
        for (auto& a : agents_)
            deliver(a);

        auto run_phase = [&](bool dynamic) {
            for (std::size_t it = 0; it < cfg_.iterations_per_phase; ++it)
            {
                for (int level = 1; level <= cfg_.levels; ++level)
                {
                    std::vector<std::size_t> batch;
                    for (const auto& a : agents_)
                        if (a.level == level)
                            batch.push_back(a.index);
                    for (std::size_t i : batch)
                    {
                        deliver(agents_[i]);
                        timed(i, [&] {
                            if (dynamic)
                                dynamic_step(agents_[i], measurements[i]);
                            else
                                stationary_step(agents_[i], measurements[i]);
                        });
                        plans_[i].level = agents_[i].level;
                    }
                    for (std::size_t i : batch)
                        bus_.publish(plans_[i]);
                }
                const bool last = it + 1 == cfg_.iterations_per_phase;
                for (auto& a : agents_)
                {
                    deliver(a);
                    const AgentPlan& plan = plans_[a.index];
                    const double naive = dynamic ? plan.naive_cost : plan.stationary_cost;
                    const double informed = dynamic ? informed_cost(plan, a.known, a.rotor_diameter, cfg_)
                                                    : informed_stationary_cost(plan, a.known, a.rotor_diameter, cfg_);
                    const bool conflict = informed > naive + cfg_.conflict_tolerance;
                    a.level = update_hierarchy_level(a.level, naive, informed, a.rng, cfg_);
                    log_[a.index].conflict_count += conflict ? 1 : 0;
                    if (last)
                    {
                        AgentPeriodLog& entry = log_[a.index];
                        entry.conflict = entry.conflict || conflict;
                        (dynamic ? entry.dynamic_conflict : entry.stationary_conflict) = conflict;
                        if (dynamic)
                        {
                            entry.naive_cost = naive;
                            entry.informed_cost = informed;
                        }
                    }
                }
            }
        };
        run_phase(false);
        run_phase(true);

        for (std::size_t i = 0; i < n; ++i)
        {
            const AgentPlan& plan = plans_[i];
            if (!failed[i] && !plan.inputs.empty())
                committed_[i] = TurbineInput{cfg_.a_fixed, std::clamp(plan.inputs.front().yaw, -cfg_.yaw_bound, cfg_.yaw_bound)};
            AgentPeriodLog& entry = log_[i];
            entry.level = agents_[i].level;
            entry.solver_failed = failed[i];
            entry.yaw = committed_[i].yaw;
            entry.stationary_state = plan.stationary_state;
            entry.terminal_residual = plan.terminal_residual;
            entry.wall_seconds = wall[i];
        }
        ++period_;
        return committed_;
    }
} // namespace fowf
