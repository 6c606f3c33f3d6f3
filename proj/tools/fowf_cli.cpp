#include "fowf/error.hpp"
#include "fowf/experiment.hpp"
#include "fowf/surrogate.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>

namespace
{
    using namespace fowf;

    int cmd_train(std::size_t farm_size, std::size_t steps, std::uint64_t seed, const std::filesystem::path& models,
                  const std::string& dataset_dir, std::size_t rmse_runs)
    {
        if (steps < 1000)
            throw ConfigError("--steps must be at least 1000");
        const FarmConfig cfg = make_row_farm(farm_size, 7.0);
        fmt::print("generating {} sampling periods for a 1x{} farm\n", steps, farm_size);
        const TrainingDataset data = generate_training_data(cfg, steps, seed);
        if (data.diverged)
            fmt::print("warning: simulator diverged after {} periods; training on partial data\n", data.steps);
        std::filesystem::create_directories(models);
        std::vector<SurrogateModel> trained;
        for (std::size_t i = 0; i < farm_size; ++i)
        {
            if (!dataset_dir.empty())
            {
                std::filesystem::create_directories(dataset_dir);
                data.write_csv(i, std::filesystem::path(dataset_dir) / fmt::format("farm{}_turbine{}.csv", farm_size, i));
            }
            TrainingReport report;
            trained.push_back(train_network(data, i, seed + 1000 + i, {}, &report));
            const auto path = surrogate_path(models, farm_size, i);
            save_surrogate(trained.back(), path);
            fmt::print("turbine {}: {} epochs, validation loss {:.4g}, mse {:.4g} (mean predictor {:.4g}) -> {}\n", i,
                       report.train_loss.size(), trained.back().validation_loss, report.validation_mse,
                       report.mean_predictor_mse, path.string());
        }
        if (rmse_runs > 0)
        {
            const RmseTable table = validate_rmse(trained, cfg, rmse_runs, seed + 2000);
            fmt::print("rollout RMSE over {} runs of 60 periods\n", rmse_runs);
            fmt::print("turbine      x [m]      y [m]   vx [m/s]   vy [m/s]\n");
            for (std::size_t i = 0; i < farm_size; ++i)
                fmt::print("{:7d} {:10.3f} {:10.3f} {:10.4f} {:10.4f}\n", i, table.rmse[i][0], table.rmse[i][1],
                           table.rmse[i][2], table.rmse[i][3]);
        }
        return 0;
    }

    int cmd_run(ExperimentSpec spec, const std::filesystem::path& out)
    {
        const SimulationLog log = run_closed_loop(spec);
        if (spec.mode == ControlMode::Dempc)
        {
            ExperimentSpec greedy_spec = spec;
            greedy_spec.mode = ControlMode::Greedy;
            const SimulationLog greedy = run_closed_loop(greedy_spec);
            export_run(log, out, &greedy);
            fmt::print("energy {:.6e} J, greedy {:.6e} J, gain {:.2f}%, conflict rate {:.3f}\n", log.energy,
                       greedy.energy, energy_gain(log, greedy), log.period_conflict_rate());
        }
        else
        {
            export_run(log, out);
            fmt::print("energy {:.6e} J\n", log.energy);
        }
        fmt::print("wrote {}\n", out.string());
        return 0;
    }

    int cmd_sweep(const ExperimentSpec& base, SweepAxis axis, const std::filesystem::path& out)
    {
        const std::size_t workers = workers_from_env();
        const auto points = sweep(base, axis, workers);
        std::filesystem::create_directories(out);
        const auto path = out / "sweep.csv";
        write_sweep_csv(points, path);
        int failures = 0;
        for (const auto& p : points)
        {
            if (p.error.empty())
                fmt::print("1x{} sigma {:.0f}%: gain {:.2f}%\n", p.farm_size, 100.0 * p.sigma, p.gain);
            else
            {
                fmt::print("1x{} sigma {:.0f}%: failed: {}\n", p.farm_size, 100.0 * p.sigma, p.error);
                ++failures;
            }
        }
        fmt::print("wrote {}\n", path.string());
        return failures == 0 ? 0 : 1;
    }
} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Floating offshore wind farm simulation and distributed economic MPC"};
    app.require_subcommand(1);

    std::size_t farm_size = 2;
    std::size_t steps = 20000;
    std::uint64_t seed = 1;
    std::string models = "models";
    std::string dataset_dir;
    std::size_t rmse_runs = 10;
    auto* train = app.add_subcommand("train", "generate data and train one surrogate per turbine");
    train->add_option("--farm-size", farm_size, "turbines in the row")->check(CLI::Range(1, 50));
    train->add_option("--steps", steps, "60 s sampling periods of training data");
    train->add_option("--seed", seed, "data and training seed");
    train->add_option("--models", models, "output directory for model JSON files");
    train->add_option("--dataset", dataset_dir, "also write the per-turbine training CSVs here");
    train->add_option("--rmse-runs", rmse_runs, "rollout validation runs (0 disables)");

    std::string mode = "greedy";
    double sigma_pct = 5.0;
    double duration = 3600.0;
    std::string out = "out";
    auto* run = app.add_subcommand("run", "closed-loop simulation");
    run->add_option("--mode", mode, "greedy or dempc")->check(CLI::IsMember({"greedy", "dempc"}));
    run->add_option("--farm-size", farm_size, "turbines in the row")->check(CLI::Range(1, 50));
    run->add_option("--sigma", sigma_pct, "wind perturbation, percent of mean speed")->check(CLI::Range(0.0, 100.0));
    run->add_option("--seed", seed, "wind and controller seed");
    run->add_option("--duration", duration, "logged duration in s");
    run->add_option("--models", models, "surrogate model directory");
    run->add_option("--out", out, "output directory")->required();

    std::string axis = "sigma";
    auto* sw = app.add_subcommand("sweep", "paired greedy/DEMPC runs along one axis (workers: FOWF_WORKERS)");
    sw->add_option("--axis", axis, "sigma or size")->check(CLI::IsMember({"sigma", "size"}));
    sw->add_option("--farm-size", farm_size, "row length for the sigma axis")->check(CLI::Range(1, 50));
    sw->add_option("--sigma", sigma_pct, "percent, for the size axis")->check(CLI::Range(0.0, 100.0));
    sw->add_option("--seed", seed, "wind and controller seed");
    sw->add_option("--duration", duration, "logged duration in s");
    sw->add_option("--models", models, "surrogate model directory");
    sw->add_option("--out", out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    auto make_spec = [&] {
        fowf::ExperimentSpec spec;
        spec.farm_size = farm_size;
        spec.sigma = sigma_pct / 100.0;
        spec.duration = duration;
        spec.wind_seed = seed;
        spec.controller_seed = seed;
        spec.models_dir = models;
        return spec;
    };

    try
    {
        if (*train)
            return cmd_train(farm_size, steps, seed, models, dataset_dir, rmse_runs);
        if (*run)
        {
            auto spec = make_spec();
            spec.mode = fowf::parse_control_mode(mode);
            return cmd_run(spec, out);
        }
        return cmd_sweep(make_spec(), fowf::parse_sweep_axis(axis), out);
    }
    catch (const fowf::Error& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
