#include "fowf/error.hpp"
#include "fowf/surrogate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace fowf;

namespace
{
    const TrainingDataset& small_dataset()
    {
        static const TrainingDataset data = generate_training_data(make_row_farm(2, 7.0), 1500, 11);
        return data;
    }

    struct Trained
    {
        SurrogateModel model;
        TrainingReport report;
    };

    const Trained& trained_leader()
    {
        static const Trained t = [] {
            Trained out;
            TrainingOptions opts;
            opts.max_epochs = 400;
            out.model = train_network(small_dataset(), 0, 5, opts, &out.report);
            return out;
        }();
        return t;
    }

    double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }
} // namespace

TEST(Network, GradientMatchesFiniteDifferences)
{
    SurrogateModel m = network::random_model(3);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(kSurrogateInputs, 32), y(kSurrogateOutputs, 32);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y.data()[i] = n(rng);

    network::Parameters grad;
    network::loss_and_gradient(m, x, y, &grad);
    const network::Parameters p0 = network::pack(m);
    std::uniform_int_distribution<int> pick(0, network::kParameterCount - 1);
    const double h = 1e-6;
    int checked = 0;
    for (int k = 0; k < 100; ++k)
    {
        const int i = pick(rng);
        network::Parameters p = p0;
        p[i] += h;
        network::unpack(p, m);
        const double up = network::loss_and_gradient(m, x, y, nullptr);
        p[i] -= 2 * h;
        network::unpack(p, m);
        const double down = network::loss_and_gradient(m, x, y, nullptr);
        const double fd = (up - down) / (2 * h);
        if (std::abs(grad[i]) < 1e-7 && std::abs(fd) < 1e-7)
            continue;
        EXPECT_LT(relative_error(grad[i], fd), 1e-5) << "coordinate " << i << ": " << grad[i] << " vs " << fd;
        ++checked;
    }
    EXPECT_GT(checked, 90);
}

TEST(Network, PackRoundTrip)
{
    const SurrogateModel m = network::random_model(1);
    SurrogateModel copy;
    network::unpack(network::pack(m), copy);
    EXPECT_EQ(copy.w1, m.w1);
    EXPECT_EQ(copy.b1, m.b1);
    EXPECT_EQ(copy.w2, m.w2);
    EXPECT_EQ(copy.b2, m.b2);
}

TEST(Surrogate, NormalizationRoundTrip)
{
    SurrogateModel m = network::random_model(2);
    m.input_offset << 90, -3, 0.01, 0, 0.3, 0.02;
    m.input_scale << 12, 40, 0.05, 0.03, 0.06, 0.2;
    m.output_offset << 1, -2, 0.1, 0.2;
    m.output_scale << 3, 7, 0.01, 0.04;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-200, 200);
    for (int k = 0; k < 100; ++k)
    {
        FeatureVector f;
        StateVector s;
        for (int i = 0; i < 6; ++i)
            f[i] = u(rng);
        for (int i = 0; i < 4; ++i)
            s[i] = u(rng);
        EXPECT_LT((m.denormalize_input(m.normalize_input(f)) - f).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((m.denormalize_output(m.normalize_output(s)) - s).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Surrogate, PredictionIsPure)
{
    const SurrogateModel m = network::random_model(4);
    const TurbineState x{90.0, 5.0, 0.01, -0.02};
    const TurbineInput u{0.3, 0.1};
    const TurbineState a = predict_next_state(m, x, u);
    const TurbineState b = predict_next_state(m, x, u);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.vx, b.vx);
    EXPECT_EQ(a.vy, b.vy);
}

TEST(Surrogate, RolloutLengths)
{
    const SurrogateModel m = network::random_model(6);
    const TurbineState x0{80.0, 1.0, 0.0, 0.0};
    const auto empty = rollout(m, x0, {});
    ASSERT_EQ(empty.size(), 1u);
    EXPECT_EQ(empty[0].x, x0.x);
    const std::vector<TurbineInput> one{{0.25, -0.1}};
    const auto single = rollout(m, x0, one);
    ASSERT_EQ(single.size(), 2u);
    const TurbineState direct = predict_next_state(m, x0, one[0]);
    EXPECT_EQ(single[1].x, direct.x);
    EXPECT_EQ(single[1].vy, direct.vy);
}

TEST(DataGeneration, RedrawCountAndRanges)
{
    const TrainingDataset& d = small_dataset();
    ASSERT_EQ(d.turbines(), 2u);
    EXPECT_FALSE(d.diverged);
    const double n = 1500, p = 0.1;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (std::size_t i = 0; i < 2; ++i)
    {
        EXPECT_EQ(d.per_turbine[i].size(), 1500u);
        EXPECT_NEAR(static_cast<double>(d.redraws[i]), n * p, 3 * sigma);
        for (const auto& t : d.per_turbine[i])
        {
            if (t.input.a == kGreedyInduction && t.input.yaw == 0.0)
                continue;
            EXPECT_GE(t.input.a, 0.2);
            EXPECT_LE(t.input.a, 0.4);
            EXPECT_LE(std::abs(t.input.yaw), deg_to_rad(20.0));
        }
    }
}

TEST(DataGeneration, Deterministic)
{
    const TrainingDataset a = generate_training_data(make_row_farm(2, 7.0), 200, 3);
    const TrainingDataset b = generate_training_data(make_row_farm(2, 7.0), 200, 3);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 200; ++k)
        {
            EXPECT_EQ(a.per_turbine[i][k].next.x, b.per_turbine[i][k].next.x);
            EXPECT_EQ(a.per_turbine[i][k].input.yaw, b.per_turbine[i][k].input.yaw);
        }
}

TEST(DataGeneration, TransitionsChain)
{
    const auto& seq = small_dataset().per_turbine[1];
    for (std::size_t k = 1; k < seq.size(); ++k)
        ASSERT_EQ(seq[k].state.x, seq[k - 1].next.x);
}

TEST(DataGeneration, Csv)
{
    const auto path = std::filesystem::temp_directory_path() / "fowf_dataset_test.csv";
    small_dataset().write_csv(0, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,y,vx,vy,a,yaw,next_x,next_y,next_vx,next_vy");
    std::size_t rows = 0;
    while (std::getline(in, line))
        ++rows;
    EXPECT_EQ(rows, 1500u);
    std::filesystem::remove(path);
}

TEST(Training, LossDecreasesOverFirstEpochs)
{
    const TrainingReport& r = trained_leader().report;
    ASSERT_GE(r.train_loss.size(), 10u);
    EXPECT_LT(r.train_loss[0], r.initial_train_loss);
    for (std::size_t e = 1; e < 10; ++e)
        EXPECT_LT(r.train_loss[e], r.train_loss[e - 1]) << e;
}

TEST(Training, BeatsMeanPredictor)
{
    const TrainingReport& r = trained_leader().report;
    EXPECT_GT(r.mean_predictor_mse, 10.0 * r.validation_mse);
    EXPECT_TRUE(trained_leader().model.valid());
}

TEST(Training, HeldOutOneStepWithinValidationError)
{
    const SurrogateModel& m = trained_leader().model;
    const TrainingDataset held = generate_training_data(make_row_farm(2, 7.0), 300, 99);
    double sq = 0.0;
    for (const auto& t : held.per_turbine[0])
        sq += (to_vector(predict_next_state(m, t.state, t.input)) - to_vector(t.next)).squaredNorm();
    const double mse = sq / (4.0 * held.per_turbine[0].size());
    EXPECT_LT(std::sqrt(mse), 3.0 * std::sqrt(trained_leader().report.validation_mse));
}

TEST(Training, SteadyStateIsNearlyFixed)
{
    const SurrogateModel& m = trained_leader().model;
    const FarmSimulator sim = settled_greedy_farm(make_row_farm(2, 7.0), {8.0, 0.0}, 2000.0);
    const TurbineState x = sim.states()[0];
    const TurbineState next = predict_next_state(m, x, TurbineInput::greedy());
    EXPECT_LT(std::abs(next.vx), 0.05);
    EXPECT_LT(std::abs(next.vy), 0.05);
    EXPECT_LT(std::abs(next.x - x.x), 2.0);
}

TEST(Training, Reproducible)
{
    TrainingOptions opts;
    opts.max_epochs = 20;
    const SurrogateModel a = train_network(small_dataset(), 1, 7, opts);
    const SurrogateModel b = train_network(small_dataset(), 1, 7, opts);
    EXPECT_EQ(network::pack(a), network::pack(b));
}

TEST(Training, Errors)
{
    const TrainingDataset tiny = generate_training_data(make_row_farm(1, 7.0), 100, 1);
    EXPECT_THROW(train_network(tiny, 0, 1), TrainingError);
    TrainingOptions frozen;
    frozen.learning_rate = 0.0;
    EXPECT_THROW(train_network(small_dataset(), 0, 1, frozen), TrainingError);
}

TEST(Persistence, SaveLoadRoundTrip)
{
    SurrogateModel m = trained_leader().model;
    const auto path = std::filesystem::temp_directory_path() / "fowf_model_test.json";
    save_surrogate(m, path);
    const SurrogateModel back = load_surrogate(path);
    EXPECT_EQ(network::pack(back), network::pack(m));
    EXPECT_EQ(back.input_scale, m.input_scale);
    EXPECT_EQ(back.output_offset, m.output_offset);
    EXPECT_EQ(back.turbine, m.turbine);
    std::filesystem::remove(path);
}

TEST(Persistence, Errors)
{
    EXPECT_THROW(load_surrogate("/nonexistent/model.json"), IoError);
    const auto path = std::filesystem::temp_directory_path() / "fowf_bad_model.json";
    {
        std::ofstream out(path);
        out << R"({"W1": [1, 2, 3]})";
    }
    EXPECT_THROW(load_surrogate(path), ConfigError);
    std::filesystem::remove(path);
}

TEST(Validation, RmseTableShape)
{
    const std::vector<SurrogateModel> models{network::random_model(1), network::random_model(2)};
    ValidationOptions opts;
    opts.horizon = 5;
    opts.warmup_periods = 2;
    const RmseTable t = validate_rmse(models, make_row_farm(2, 7.0), 2, 4, opts);
    ASSERT_EQ(t.rmse.size(), 2u);
    ASSERT_EQ(t.per_run.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i)
        for (int k = 0; k < 4; ++k)
        {
            EXPECT_GE(t.rmse[i][k], 0.0);
            EXPECT_NEAR(t.rmse[i][k], 0.5 * (t.per_run[0][i][k] + t.per_run[1][i][k]), 1e-12);
        }
}
