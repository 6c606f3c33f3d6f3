#include "fowf/surrogate.hpp"

#include "fowf/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace fowf
{
    FeatureVector to_features(const TurbineState& x, const TurbineInput& u)
    {
        FeatureVector f;
        f << x.x, x.y, x.vx, x.vy, u.a, u.yaw;
        return f;
    }

    StateVector to_vector(const TurbineState& x) { return StateVector(x.x, x.y, x.vx, x.vy); }

    TurbineState from_vector(const StateVector& v) { return {v(0), v(1), v(2), v(3)}; }

    FeatureVector SurrogateModel::normalize_input(const FeatureVector& f) const
    {
        return (f - input_offset).cwiseQuotient(input_scale);
    }

    FeatureVector SurrogateModel::denormalize_input(const FeatureVector& z) const
    {
        return z.cwiseProduct(input_scale) + input_offset;
    }

    StateVector SurrogateModel::normalize_output(const StateVector& d) const
    {
        return (d - output_offset).cwiseQuotient(output_scale);
    }

    StateVector SurrogateModel::denormalize_output(const StateVector& z) const
    {
        return z.cwiseProduct(output_scale) + output_offset;
    }

    bool SurrogateModel::valid() const
    {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() &&
               (input_scale.array() != 0.0).all() && (output_scale.array() != 0.0).all();
    }

    TurbineState predict_next_state(const SurrogateModel& m, const TurbineState& state, const TurbineInput& input)
    {
        const FeatureVector z = m.normalize_input(to_features(state, input));
        const Eigen::Matrix<double, kSurrogateHidden, 1> hidden = (m.w1 * z + m.b1).array().tanh().matrix();
        const StateVector out = m.w2 * hidden + m.b2;
        return from_vector(to_vector(state) + m.denormalize_output(out));
    }

    std::vector<TurbineState> rollout(const SurrogateModel& model, const TurbineState& x0,
                                      std::span<const TurbineInput> inputs)
    {
        std::vector<TurbineState> traj;
        traj.reserve(inputs.size() + 1);
        traj.push_back(x0);
        for (const auto& u : inputs)
            traj.push_back(predict_next_state(model, traj.back(), u));
        return traj;
    }

    namespace network
    {
        Parameters pack(const SurrogateModel& m)
        {
            Parameters p;
            int k = 0;
            auto put = [&](const auto& mat) {
                for (Eigen::Index j = 0; j < mat.cols(); ++j)
                    for (Eigen::Index i = 0; i < mat.rows(); ++i)
                        p(k++) = mat(i, j);
            };
            put(m.w1);
            put(m.b1);
            put(m.w2);
            put(m.b2);
            return p;
        }

        void unpack(const Parameters& p, SurrogateModel& m)
        {
            int k = 0;
            auto get = [&](auto& mat) {
                for (Eigen::Index j = 0; j < mat.cols(); ++j)
                    for (Eigen::Index i = 0; i < mat.rows(); ++i)
                        mat(i, j) = p(k++);
            };
            get(m.w1);
            get(m.b1);
            get(m.w2);
            get(m.b2);
        }

        double loss_and_gradient(const SurrogateModel& m, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                 Parameters* gradient)
        {
            const auto n = inputs.cols();
            const Eigen::MatrixXd hidden = ((m.w1 * inputs).colwise() + m.b1).array().tanh().matrix();
            const Eigen::MatrixXd err = (m.w2 * hidden).colwise() + m.b2 - targets;
            const double norm = 1.0 / static_cast<double>(n * kSurrogateOutputs);
            const double loss = err.squaredNorm() * norm;
            if (gradient)
            {
                const Eigen::MatrixXd d_out = 2.0 * norm * err;
                const Eigen::MatrixXd d_hidden =
                    ((m.w2.transpose() * d_out).array() * (1.0 - hidden.array().square())).matrix();
                SurrogateModel g;
                g.w2 = d_out * hidden.transpose();
                g.b2 = d_out.rowwise().sum();
                g.w1 = d_hidden * inputs.transpose();
                g.b1 = d_hidden.rowwise().sum();
                *gradient = pack(g);
            }
            return loss;
        }

        SurrogateModel random_model(std::uint64_t seed)
        {
            std::mt19937_64 rng(seed);
            SurrogateModel m;
            const double l1 = std::sqrt(6.0 / (kSurrogateInputs + kSurrogateHidden));
            const double l2 = std::sqrt(6.0 / (kSurrogateHidden + kSurrogateOutputs));
            std::uniform_real_distribution<double> u1(-l1, l1), u2(-l2, l2);
            for (Eigen::Index j = 0; j < m.w1.cols(); ++j)
                for (Eigen::Index i = 0; i < m.w1.rows(); ++i)
                    m.w1(i, j) = u1(rng);
            for (Eigen::Index j = 0; j < m.w2.cols(); ++j)
                for (Eigen::Index i = 0; i < m.w2.rows(); ++i)
                    m.w2(i, j) = u2(rng);
            m.b1.setZero();
            m.b2.setZero();
            return m;
        }
    } // namespace network

    FarmSimulator settled_greedy_farm(const FarmConfig& cfg, const Vec2& wind, double settle_time,
                                      const SimulationParams& sim)
    {
        FarmSimulator farm(cfg, sim);
        const std::vector<TurbineInput> greedy(cfg.size(), TurbineInput::greedy());
        const auto steps = static_cast<std::size_t>(std::llround(settle_time / sim.dt));
        for (std::size_t k = 0; k < steps; ++k)
            farm.step(greedy, wind);
        return farm;
    }

    namespace
    {
        struct InputProcess
        {
            const DataGenerationOptions& opts;
            std::uniform_real_distribution<double> coin{0.0, 1.0};
            std::uniform_real_distribution<double> induction;
            std::uniform_real_distribution<double> yaw;

            explicit InputProcess(const DataGenerationOptions& o)
                : opts(o), induction(o.a_min, o.a_max), yaw(-o.yaw_limit, o.yaw_limit)
            {
            }

            /// Redraws with the configured probability; returns true when the input changed.
            bool advance(TurbineInput& u, std::mt19937_64& rng)
            {
                if (coin(rng) >= opts.redraw_probability)
                    return false;
                u.a = induction(rng);
                u.yaw = yaw(rng);
                return true;
            }
        };

        void advance_period(FarmSimulator& sim, std::span<const TurbineInput> inputs, const Vec2& wind, double period)
        {
            const auto steps = static_cast<std::size_t>(std::llround(period / sim.params().dt));
            for (std::size_t k = 0; k < steps; ++k)
                sim.step(inputs, wind);
        }
    } // namespace

    void TrainingDataset::write_csv(std::size_t turbine, const std::filesystem::path& path) const
    {
        std::ofstream out(path);
        if (!out)
            throw IoError("cannot write " + path.string());
        out << "x,y,vx,vy,a,yaw,next_x,next_y,next_vx,next_vy\n";
        for (const auto& t : per_turbine.at(turbine))
            out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                               t.state.x, t.state.y, t.state.vx, t.state.vy, t.input.a, t.input.yaw, t.next.x,
                               t.next.y, t.next.vx, t.next.vy);
    }

    TrainingDataset generate_training_data(const FarmConfig& cfg, std::size_t steps, std::uint64_t seed,
                                           const DataGenerationOptions& opts)
    {
        FarmSimulator sim = settled_greedy_farm(cfg, opts.wind, opts.settle_time, opts.sim);
        TrainingDataset data;
        data.per_turbine.resize(cfg.size());
        data.redraws.assign(cfg.size(), 0);
        for (auto& v : data.per_turbine)
            v.reserve(steps);

        std::mt19937_64 rng(seed);
        InputProcess process(opts);
        std::vector<TurbineInput> inputs(cfg.size(), TurbineInput::greedy());
        for (std::size_t k = 0; k < steps; ++k)
        {
            for (std::size_t i = 0; i < inputs.size(); ++i)
                data.redraws[i] += process.advance(inputs[i], rng) ? 1 : 0;
            const std::vector<TurbineState> before = sim.states();
            try
            {
                advance_period(sim, inputs, opts.wind, opts.sampling_period);
            }
            catch (const Error&)
            {
                data.diverged = true;
                break;
            }
            for (std::size_t i = 0; i < inputs.size(); ++i)
                data.per_turbine[i].push_back({before[i], inputs[i], sim.states()[i]});
            ++data.steps;
        }
        return data;
    }

    SurrogateModel train_network(const TrainingDataset& data, std::size_t turbine, std::uint64_t seed,
                                 const TrainingOptions& opts, TrainingReport* report)
    {
        const auto& samples = data.per_turbine.at(turbine);
        if (samples.size() < 500)
            throw TrainingError(fmt::format("turbine {} has {} samples, need at least 500", turbine, samples.size()));

        std::mt19937_64 rng(seed);
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_val = static_cast<std::size_t>(std::round(opts.validation_fraction * samples.size()));
        const std::size_t n_train = samples.size() - n_val;

        auto gather = [&](std::size_t begin, std::size_t end, Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
            x.resize(kSurrogateInputs, static_cast<Eigen::Index>(end - begin));
            y.resize(kSurrogateOutputs, static_cast<Eigen::Index>(end - begin));
            for (std::size_t c = begin; c < end; ++c)
            {
                const auto& s = samples[order[c]];
                x.col(static_cast<Eigen::Index>(c - begin)) = to_features(s.state, s.input);
                y.col(static_cast<Eigen::Index>(c - begin)) = to_vector(s.next) - to_vector(s.state);
            }
        };
        Eigen::MatrixXd x_train, y_train, x_val, y_val;
        gather(0, n_train, x_train, y_train);
        gather(n_train, samples.size(), x_val, y_val);

        SurrogateModel model = network::random_model(rng());
        model.turbine = turbine;
        auto zscore = [](const Eigen::MatrixXd& m, auto& offset, auto& scale) {
            offset = m.rowwise().mean();
            const Eigen::MatrixXd centered = m.colwise() - m.rowwise().mean();
            scale = (centered.array().square().rowwise().sum() / static_cast<double>(m.cols())).sqrt().matrix();
            for (Eigen::Index i = 0; i < scale.size(); ++i)
                if (!(scale(i) > 1e-12))
                    scale(i) = 1.0;
        };
        zscore(x_train, model.input_offset, model.input_scale);
        zscore(y_train, model.output_offset, model.output_scale);

        auto normalize = [&](Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
            x = (x.colwise() - model.input_offset).array().colwise() / model.input_scale.array();
            y = (y.colwise() - model.output_offset).array().colwise() / model.output_scale.array();
        };
        normalize(x_train, y_train);
        normalize(x_val, y_val);

        TrainingReport local;
        TrainingReport& rep = report ? *report : local;
        rep = TrainingReport{};
        rep.initial_train_loss = network::loss_and_gradient(model, x_train, y_train, nullptr);

        using network::Parameters;
        Parameters params = network::pack(model);
        Parameters m1 = Parameters::Zero(), m2 = Parameters::Zero(), grad;
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        std::size_t adam_step = 0;

        Parameters best = params;
        double best_val = std::numeric_limits<double>::infinity();
        std::size_t since_best = 0;

        std::vector<std::size_t> batch_order(n_train);
        std::iota(batch_order.begin(), batch_order.end(), 0);
        Eigen::MatrixXd xb, yb;
        for (std::size_t epoch = 0; epoch < opts.max_epochs; ++epoch)
        {
            std::shuffle(batch_order.begin(), batch_order.end(), rng);
            for (std::size_t start = 0; start < n_train; start += opts.batch_size)
            {
                const std::size_t end = std::min(n_train, start + opts.batch_size);
                xb.resize(kSurrogateInputs, static_cast<Eigen::Index>(end - start));
                yb.resize(kSurrogateOutputs, static_cast<Eigen::Index>(end - start));
                for (std::size_t c = start; c < end; ++c)
                {
                    xb.col(static_cast<Eigen::Index>(c - start)) = x_train.col(static_cast<Eigen::Index>(batch_order[c]));
                    yb.col(static_cast<Eigen::Index>(c - start)) = y_train.col(static_cast<Eigen::Index>(batch_order[c]));
                }
                network::loss_and_gradient(model, xb, yb, &grad);
                ++adam_step;
                m1 = beta1 * m1 + (1.0 - beta1) * grad;
                m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_step));
                params -= (opts.learning_rate * (m1 / c1).array() / ((m2 / c2).array().sqrt() + eps)).matrix();
                network::unpack(params, model);
            }

            const double train_loss = network::loss_and_gradient(model, x_train, y_train, nullptr);
            const double val_loss = n_val > 0 ? network::loss_and_gradient(model, x_val, y_val, nullptr) : train_loss;
            rep.train_loss.push_back(train_loss);
            rep.validation_loss.push_back(val_loss);
            if (!std::isfinite(train_loss))
                throw TrainingError("training loss became non-finite");

            bool stop = false;
            if (val_loss < best_val)
            {
                best_val = val_loss;
                best = params;
                rep.best_epoch = epoch;
                since_best = 0;
            }
            else
            {
                stop = ++since_best >= opts.patience;
            }

            if (epoch + 1 == std::min<std::size_t>(100, opts.max_epochs) || (stop && epoch < 100))
            {
                const double lowest = *std::min_element(rep.train_loss.begin(), rep.train_loss.end());
                if (!(lowest < rep.initial_train_loss))
                    throw TrainingError("training loss did not decrease over the first 100 epochs");
            }
            if (stop)
                break;
        }

        network::unpack(best, model);
        model.validation_loss = best_val;

        if (n_val > 0)
        {
            StateVector mean_next = StateVector::Zero();
            for (std::size_t c = 0; c < n_train; ++c)
                mean_next += to_vector(samples[order[c]].next);
            mean_next /= static_cast<double>(n_train);
            double base_err = 0.0, model_err = 0.0;
            for (std::size_t c = n_train; c < samples.size(); ++c)
            {
                const auto& s = samples[order[c]];
                base_err += (to_vector(s.next) - mean_next).squaredNorm();
                model_err += (to_vector(predict_next_state(model, s.state, s.input)) - to_vector(s.next)).squaredNorm();
            }
            const double denom = static_cast<double>(n_val * kSurrogateOutputs);
            rep.mean_predictor_mse = base_err / denom;
            rep.validation_mse = model_err / denom;
        }
        return model;
    }

    RmseTable validate_rmse(std::span<const SurrogateModel> models, const FarmConfig& cfg, std::size_t runs,
                            std::uint64_t seed, const ValidationOptions& opts)
    {
        if (runs == 0)
            throw ConfigError("validation needs at least one run");
        if (models.size() != cfg.size())
            throw ConfigError("one surrogate per turbine is required");

        const auto& gen = opts.generation;
        const FarmSimulator base = settled_greedy_farm(cfg, gen.wind, gen.settle_time, gen.sim);
        std::mt19937_64 rng(seed);
        InputProcess process(gen);

        RmseTable table;
        table.rmse.assign(cfg.size(), {0.0, 0.0, 0.0, 0.0});
        for (std::size_t run = 0; run < runs; ++run)
        {
            FarmSimulator sim = base;
            std::vector<TurbineInput> inputs(cfg.size(), TurbineInput::greedy());
            for (std::size_t k = 0; k < opts.warmup_periods; ++k)
            {
                for (auto& u : inputs)
                    process.advance(u, rng);
                advance_period(sim, inputs, gen.wind, gen.sampling_period);
            }

            const std::vector<TurbineState> x0 = sim.states();
            std::vector<std::vector<TurbineInput>> sequences(cfg.size());
            std::vector<std::vector<TurbineState>> truth(cfg.size());
            for (std::size_t k = 0; k < opts.horizon; ++k)
            {
                for (std::size_t i = 0; i < cfg.size(); ++i)
                {
                    process.advance(inputs[i], rng);
                    sequences[i].push_back(inputs[i]);
                }
                advance_period(sim, inputs, gen.wind, gen.sampling_period);
                for (std::size_t i = 0; i < cfg.size(); ++i)
                    truth[i].push_back(sim.states()[i]);
            }

            std::vector<std::array<double, 4>> run_rmse(cfg.size());
            for (std::size_t i = 0; i < cfg.size(); ++i)
            {
                const auto predicted = rollout(models[i], x0[i], sequences[i]);
                StateVector sq = StateVector::Zero();
                for (std::size_t k = 0; k < opts.horizon; ++k)
                    sq += (to_vector(predicted[k + 1]) - to_vector(truth[i][k])).cwiseAbs2();
                sq /= static_cast<double>(opts.horizon);
                for (int o = 0; o < 4; ++o)
                {
                    run_rmse[i][o] = std::sqrt(sq(o));
                    table.rmse[i][o] += run_rmse[i][o] / static_cast<double>(runs);
                }
            }
            table.per_run.push_back(std::move(run_rmse));
        }
        return table;
    }

    namespace
    {
        template <typename M>
        nlohmann::json matrix_json(const M& m)
        {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index i = 0; i < m.rows(); ++i)
            {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    row.push_back(m(i, j));
                rows.push_back(row);
            }
            return rows;
        }

        template <typename M>
        void read_matrix(const nlohmann::json& j, M& m, const char* name)
        {
            if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != m.rows())
                throw ConfigError(fmt::format("surrogate field '{}' has the wrong shape", name));
            for (Eigen::Index i = 0; i < m.rows(); ++i)
            {
                const auto& row = j[static_cast<std::size_t>(i)];
                if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
                    throw ConfigError(fmt::format("surrogate field '{}' has the wrong shape", name));
                for (Eigen::Index c = 0; c < m.cols(); ++c)
                    m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
            }
        }
    } // namespace

    void save_surrogate(const SurrogateModel& m, const std::filesystem::path& path)
    {
        nlohmann::json j;
        j["turbine"] = m.turbine;
        j["target"] = "increment";
        j["validation_loss"] = m.validation_loss;
        j["W1"] = matrix_json(m.w1);
        j["b1"] = matrix_json(m.b1);
        j["W2"] = matrix_json(m.w2);
        j["b2"] = matrix_json(m.b2);
        j["input_offset"] = matrix_json(m.input_offset);
        j["input_scale"] = matrix_json(m.input_scale);
        j["output_offset"] = matrix_json(m.output_offset);
        j["output_scale"] = matrix_json(m.output_scale);
        std::ofstream out(path);
        if (!out)
            throw IoError("cannot write " + path.string());
        out << j.dump(1) << '\n';
    }

    SurrogateModel load_surrogate(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open " + path.string());
        nlohmann::json j;
        try
        {
            in >> j;
            SurrogateModel m;
            m.turbine = j.at("turbine").get<std::size_t>();
            m.validation_loss = j.value("validation_loss", 0.0);
            read_matrix(j.at("W1"), m.w1, "W1");
            read_matrix(j.at("b1"), m.b1, "b1");
            read_matrix(j.at("W2"), m.w2, "W2");
            read_matrix(j.at("b2"), m.b2, "b2");
            read_matrix(j.at("input_offset"), m.input_offset, "input_offset");
            read_matrix(j.at("input_scale"), m.input_scale, "input_scale");
            read_matrix(j.at("output_offset"), m.output_offset, "output_offset");
            read_matrix(j.at("output_scale"), m.output_scale, "output_scale");
            if (!m.valid())
                throw ConfigError("surrogate " + path.string() + " has non-finite weights or zero scales");
            return m;
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError("surrogate " + path.string() + ": " + e.what());
        }
    }
} // namespace fowf
