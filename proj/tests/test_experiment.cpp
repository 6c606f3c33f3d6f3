#include "fowf/error.hpp"
#include "fowf/experiment.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace fowf;

namespace
{
    std::filesystem::path scratch(const std::string& name)
    {
        const auto dir = std::filesystem::temp_directory_path() / ("fowf_exp_" + name);
        std::filesystem::remove_all(dir);
        return dir;
    }

    std::string slurp(const std::filesystem::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p)
    {
        std::ifstream in(p);
        std::vector<std::vector<std::string>> rows;
        std::string line;
        while (std::getline(in, line))
        {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ','))
                cells.push_back(cell);
            rows.push_back(cells);
        }
        return rows;
    }

    std::vector<SurrogateModel> random_models(std::size_t n)
    {
        std::vector<SurrogateModel> out;
        for (std::size_t i = 0; i < n; ++i)
        {
            SurrogateModel m = network::random_model(100 + i);
            m.w2 *= 0.01;
            m.b2.setZero();
            m.turbine = i;
            out.push_back(m);
        }
        return out;
    }

    ExperimentSpec short_spec(std::size_t n, ControlMode mode)
    {
        ExperimentSpec s;
        s.farm_size = n;
        s.duration = 600.0;
        s.settle_time = 600.0;
        s.mode = mode;
        return s;
    }
} // namespace

TEST(Spec, Validation)
{
    ExperimentSpec s;
    EXPECT_NO_THROW(s.validate());
    s.duration = 3630.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = ExperimentSpec{};
    s.sigma = -0.1;
    EXPECT_THROW(s.validate(), ConfigError);
    s = ExperimentSpec{};
    s.farm_size = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Spec, Parsing)
{
    EXPECT_EQ(parse_control_mode("greedy"), ControlMode::Greedy);
    EXPECT_EQ(parse_control_mode("dempc"), ControlMode::Dempc);
    EXPECT_EQ(to_string(ControlMode::Dempc), "dempc");
    EXPECT_THROW(parse_control_mode("optimal"), ConfigError);
    EXPECT_EQ(parse_sweep_axis("sigma"), SweepAxis::Sigma);
    EXPECT_EQ(parse_sweep_axis("size"), SweepAxis::Size);
    EXPECT_THROW(parse_sweep_axis("seed"), ConfigError);
}

TEST(Spec, MissingSurrogatesAreConfigErrors)
{
    ExperimentSpec s = short_spec(2, ControlMode::Dempc);
    s.models_dir = "/nonexistent/models";
    EXPECT_THROW(run_closed_loop(s), ConfigError);
    EXPECT_THROW(run_closed_loop(s, random_models(1)), ConfigError);
    EXPECT_EQ(surrogate_path("m", 3, 1), std::filesystem::path("m") / "farm3_turbine1.json");
}

TEST(ClosedLoop, GreedySingleTurbineConstantPower)
{
    ExperimentSpec s;
    s.farm_size = 1;
    s.sigma = 0.0;
    const SimulationLog log = run_closed_loop(s);
    ASSERT_EQ(log.samples(), 61u);
    for (double p : log.total_power)
        EXPECT_NEAR(p, 2.317e6, 0.001 * 2.317e6);
    EXPECT_NEAR(log.energy, 2.317e6 * 3600.0, 0.001 * 2.317e6 * 3600.0);
    for (const auto& u : log.inputs)
    {
        EXPECT_EQ(u[0].a, kGreedyInduction);
        EXPECT_EQ(u[0].yaw, 0.0);
    }
}

TEST(ClosedLoop, ModesShareTheWind)
{
    const SimulationLog g = run_closed_loop(short_spec(2, ControlMode::Greedy));
    const SimulationLog d = run_closed_loop(short_spec(2, ControlMode::Dempc), random_models(2));
    ASSERT_EQ(g.wind.size(), d.wind.size());
    for (std::size_t k = 0; k < g.wind.size(); ++k)
        EXPECT_EQ(g.wind[k], d.wind[k]);
    EXPECT_EQ(g.times, d.times);
    EXPECT_EQ(d.controller.size(), 2u * 10u);
    for (const auto& u : d.inputs)
        for (const auto& ui : u)
        {
            EXPECT_LE(std::abs(ui.yaw), deg_to_rad(10.0) + 1e-15);
            EXPECT_EQ(ui.a, kGreedyInduction);
        }
}

TEST(ClosedLoop, EnergyIsTrapezoid)
{
    const SimulationLog g = run_closed_loop(short_spec(3, ControlMode::Greedy));
    EXPECT_NEAR(g.energy, trapezoid_energy(g.times, g.total_power), 1e-9 * g.energy);
    for (std::size_t k = 0; k < g.samples(); ++k)
    {
        double sum = 0.0;
        for (double p : g.powers[k])
            sum += p;
        EXPECT_NEAR(g.total_power[k], sum, 1e-6);
    }
    const std::vector<double> t{0.0, 1.0, 3.0};
    const std::vector<double> p{2.0, 4.0, 0.0};
    EXPECT_DOUBLE_EQ(trapezoid_energy(t, p), 3.0 + 4.0);
}

TEST(Gain, IdenticalLogsGiveZero)
{
    const SimulationLog g = run_closed_loop(short_spec(2, ControlMode::Greedy));
    EXPECT_DOUBLE_EQ(energy_gain(g, g), 0.0);
}

TEST(Gain, MismatchedRunsRejected)
{
    const SimulationLog a = run_closed_loop(short_spec(1, ControlMode::Greedy));
    ExperimentSpec longer = short_spec(1, ControlMode::Greedy);
    longer.duration = 1200.0;
    EXPECT_THROW(energy_gain(a, run_closed_loop(longer)), ConfigError);
    ExperimentSpec other_wind = short_spec(1, ControlMode::Greedy);
    other_wind.wind_seed = 2;
    EXPECT_THROW(energy_gain(a, run_closed_loop(other_wind)), ConfigError);
}

TEST(Export, FilesAndRowCounts)
{
    ExperimentSpec s;
    s.farm_size = 2;
    s.mode = ControlMode::Dempc;
    const SimulationLog d = run_closed_loop(s, random_models(2));
    s.mode = ControlMode::Greedy;
    const SimulationLog g = run_closed_loop(s);
    const auto dir = scratch("export");
    export_run(d, dir, &g);

    const auto states = read_csv(dir / "states.csv");
    ASSERT_EQ(states.size(), 1u + 61u);
    EXPECT_EQ(states[0].size(), 1u + 4u * 2u);
    EXPECT_EQ(states[0][0], "t_s");
    const auto power = read_csv(dir / "power.csv");
    ASSERT_EQ(power.size(), 1u + 61u);
    const auto ctrl = read_csv(dir / "controller.csv");
    EXPECT_EQ(ctrl.size(), 1u + 60u * 2u);
    EXPECT_EQ(ctrl[0][0], "period");
    EXPECT_EQ(read_csv(dir / "wind.csv").size(), 1u + d.wind_series.resampled().size());

    // Energy recomputed from the exported power column.
    std::vector<double> t, p;
    for (std::size_t k = 1; k < power.size(); ++k)
    {
        t.push_back(std::stod(power[k].front()));
        p.push_back(std::stod(power[k].back()));
    }
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    const double energy = summary.at("energy_J").get<double>();
    EXPECT_NEAR(trapezoid_energy(t, p), energy, 1e-9 * energy);
    EXPECT_NEAR(summary.at("gain_pct").get<double>(), energy_gain(d, g), 1e-9);
    std::filesystem::remove_all(dir);
}

TEST(Export, ByteIdenticalReruns)
{
    ExperimentSpec s = short_spec(2, ControlMode::Dempc);
    s.sigma = 0.1;
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    export_run(run_closed_loop(s, random_models(2)), a);
    export_run(run_closed_loop(s, random_models(2)), b);
    for (const char* f : {"states.csv", "power.csv", "controller.csv", "wind.csv"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Export, UnwritableDirectory)
{
    const SimulationLog g = run_closed_loop(short_spec(1, ControlMode::Greedy));
    EXPECT_THROW(export_run(g, "/proc/fowf_cannot_write"), IoError);
}

TEST(Sweep, ErrorsAreCapturedPerPoint)
{
    ExperimentSpec s = short_spec(2, ControlMode::Dempc);
    s.models_dir = "/nonexistent/models";
    const auto points = sweep(s, SweepAxis::Size, 2);
    ASSERT_EQ(points.size(), 4u);
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        EXPECT_EQ(points[i].farm_size, i + 2);
        EXPECT_FALSE(points[i].error.empty());
    }
    const auto dir = scratch("sweep");
    std::filesystem::create_directories(dir);
    write_sweep_csv(points, dir / "sweep.csv");
    EXPECT_EQ(read_csv(dir / "sweep.csv").size(), 5u);
    std::filesystem::remove_all(dir);
}

TEST(Sweep, SigmaAxisPoints)
{
    ExperimentSpec s = short_spec(1, ControlMode::Dempc);
    s.duration = 120.0;
    s.settle_time = 60.0;
    s.models_dir = "/nonexistent/models";
    const auto points = sweep(s, SweepAxis::Sigma, 1);
    ASSERT_EQ(points.size(), 4u);
    EXPECT_DOUBLE_EQ(points[0].sigma, 0.05);
    EXPECT_DOUBLE_EQ(points[3].sigma, 0.20);
}

TEST(Workers, FromEnvironment)
{
    ::setenv("FOWF_WORKERS", "3", 1);
    EXPECT_EQ(workers_from_env(), 3u);
    ::setenv("FOWF_WORKERS", "zero", 1);
    EXPECT_THROW(workers_from_env(), ConfigError);
    ::unsetenv("FOWF_WORKERS");
    EXPECT_GE(workers_from_env(), 1u);
}
