#pragma once

#include "fowf/farm.hpp"
#include "fowf/wake.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fowf
{
    inline constexpr int kSurrogateInputs = 6;
    inline constexpr int kSurrogateHidden = 20;
    inline constexpr int kSurrogateOutputs = 4;

    using FeatureVector = Eigen::Matrix<double, kSurrogateInputs, 1>;
    using StateVector = Eigen::Matrix<double, kSurrogateOutputs, 1>;

    FeatureVector to_features(const TurbineState& x, const TurbineInput& u);
    StateVector to_vector(const TurbineState& x);
    TurbineState from_vector(const StateVector& v);

    /// One turbine's 6-20-4 feed-forward network (tanh hidden layer, linear output).
    /// The network predicts the normalised state increment over one sampling period.
    struct SurrogateModel
    {
        Eigen::Matrix<double, kSurrogateHidden, kSurrogateInputs> w1;
        Eigen::Matrix<double, kSurrogateHidden, 1> b1;
        Eigen::Matrix<double, kSurrogateOutputs, kSurrogateHidden> w2;
        StateVector b2;

        FeatureVector input_offset = FeatureVector::Zero();
        FeatureVector input_scale = FeatureVector::Ones();
        StateVector output_offset = StateVector::Zero();
        StateVector output_scale = StateVector::Ones();

        std::size_t turbine = 0;
        double validation_loss = 0.0;

        FeatureVector normalize_input(const FeatureVector& f) const;
        FeatureVector denormalize_input(const FeatureVector& z) const;
        StateVector normalize_output(const StateVector& d) const;
        StateVector denormalize_output(const StateVector& z) const;
        bool valid() const;
    };

    struct Transition
    {
        TurbineState state;
        TurbineInput input;
        TurbineState next;
    };

    struct TrainingDataset
    {
        std::vector<std::vector<Transition>> per_turbine;
        std::vector<std::size_t> redraws; // input redraw count per turbine
        std::size_t steps = 0;
        bool diverged = false; // simulation aborted early; data is partial

        std::size_t turbines() const { return per_turbine.size(); }
        void write_csv(std::size_t turbine, const std::filesystem::path& path) const;
    };

    struct DataGenerationOptions
    {
        double sampling_period = 60.0;
        double settle_time = 2000.0;
        double redraw_probability = 0.1;
        double a_min = 0.2;
        double a_max = 0.4;
        double yaw_limit = deg_to_rad(20.0);
        Vec2 wind{8.0, 0.0};
        SimulationParams sim;
    };

    /// Simulator at greedy steady state after `settle_time` seconds of constant wind.
    FarmSimulator settled_greedy_farm(const FarmConfig& cfg, const Vec2& wind, double settle_time,
                                      const SimulationParams& sim = {});

    TrainingDataset generate_training_data(const FarmConfig& cfg, std::size_t steps, std::uint64_t seed,
                                           const DataGenerationOptions& opts = {});

    struct TrainingOptions
    {
        std::size_t max_epochs = 1500;
        std::size_t batch_size = 64;
        double learning_rate = 2e-3;
        std::size_t patience = 50;
        double validation_fraction = 0.2;
    };

    struct TrainingReport
    {
        std::vector<double> train_loss;      // full training-set MSE after each epoch
        std::vector<double> validation_loss; // per epoch
        double initial_train_loss = 0.0;
        double mean_predictor_mse = 0.0; // validation MSE of predicting the mean next state
        double validation_mse = 0.0;     // validation MSE of the returned model, physical units
        std::size_t best_epoch = 0;
    };

    SurrogateModel train_network(const TrainingDataset& data, std::size_t turbine, std::uint64_t seed,
                                 const TrainingOptions& opts = {}, TrainingReport* report = nullptr);

    TurbineState predict_next_state(const SurrogateModel& model, const TurbineState& state, const TurbineInput& input);
    std::vector<TurbineState> rollout(const SurrogateModel& model, const TurbineState& x0,
                                      std::span<const TurbineInput> inputs);

    /// Flat parameter access used by the trainer and by gradient checks.
    namespace network
    {
        inline constexpr int kParameterCount =
            kSurrogateHidden * kSurrogateInputs + kSurrogateHidden + kSurrogateOutputs * kSurrogateHidden +
            kSurrogateOutputs;
        using Parameters = Eigen::Matrix<double, kParameterCount, 1>;

        Parameters pack(const SurrogateModel& m);
        void unpack(const Parameters& p, SurrogateModel& m);
        /// Mean squared error over a normalised batch (columns are samples) and its gradient.
        double loss_and_gradient(const SurrogateModel& m, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                 Parameters* gradient);
        SurrogateModel random_model(std::uint64_t seed);
    } // namespace network

    struct RmseTable
    {
        /// rmse[turbine] = {x, y, vx, vy}, averaged over runs.
        std::vector<std::array<double, 4>> rmse;
        /// per_run[run][turbine] = {x, y, vx, vy}.
        std::vector<std::vector<std::array<double, 4>>> per_run;
    };

    struct ValidationOptions
    {
        std::size_t horizon = 60;       // sampling periods per run
        std::size_t warmup_periods = 30; // random-input periods that produce the random initial condition
        DataGenerationOptions generation;
    };

    RmseTable validate_rmse(std::span<const SurrogateModel> models, const FarmConfig& cfg, std::size_t runs,
                            std::uint64_t seed, const ValidationOptions& opts = {});

    void save_surrogate(const SurrogateModel& m, const std::filesystem::path& path);
    SurrogateModel load_surrogate(const std::filesystem::path& path);
} // namespace fowf
