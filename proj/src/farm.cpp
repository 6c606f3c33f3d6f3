#include "fowf/farm.hpp"

#include "fowf/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fowf
{
    namespace
    {
        using nlohmann::json;

        json spec_to_json(const TurbineSpec& s)
        {
            return {{"rotor_diameter", s.rotor_diameter},
                    {"air_density", s.air_density},
                    {"effective_mass", s.effective_mass},
                    {"hydro_drag_coeff", s.hydro_drag_coeff}};
        }

        TurbineSpec spec_from_json(const json& j, TurbineSpec s = {})
        {
            s.rotor_diameter = j.value("rotor_diameter", s.rotor_diameter);
            s.air_density = j.value("air_density", s.air_density);
            s.effective_mass = j.value("effective_mass", s.effective_mass);
            s.hydro_drag_coeff = j.value("hydro_drag_coeff", s.hydro_drag_coeff);
            return s;
        }

        json mooring_to_json(const MooringSpec& m)
        {
            return {{"line_length", m.line_length},
                    {"water_depth", m.water_depth},
                    {"line_weight_per_length", m.line_weight_per_length},
                    {"anchor_radius", m.anchor_radius},
                    {"num_lines", m.num_lines}};
        }

        MooringSpec mooring_from_json(const json& j, MooringSpec m = {})
        {
            m.line_length = j.value("line_length", m.line_length);
            m.water_depth = j.value("water_depth", m.water_depth);
            m.line_weight_per_length = j.value("line_weight_per_length", m.line_weight_per_length);
            m.anchor_radius = j.value("anchor_radius", m.anchor_radius);
            m.num_lines = j.value("num_lines", m.num_lines);
            return m;
        }

        std::vector<std::vector<std::size_t>> chain_adjacency(std::size_t n)
        {
            std::vector<std::vector<std::size_t>> adj(n);
            for (std::size_t i = 0; i + 1 < n; ++i)
            {
                adj[i].push_back(i + 1);
                adj[i + 1].push_back(i);
            }
            for (auto& a : adj)
                std::sort(a.begin(), a.end());
            return adj;
        }
    } // namespace

    void TurbineSpec::validate() const
    {
        if (!(rotor_diameter > 0.0))
            throw ConfigError("rotor_diameter must be positive");
        if (!(air_density > 0.0))
            throw ConfigError("air_density must be positive");
        if (!(effective_mass > 0.0))
            throw ConfigError("effective_mass must be positive");
        if (!(hydro_drag_coeff >= 0.0))
            throw ConfigError("hydro_drag_coeff must be non-negative");
    }

    void MooringSpec::validate() const
    {
        if (!(water_depth > 0.0) || !(line_length > water_depth))
            throw ConfigError("mooring line must be longer than the water depth");
        if (num_lines < 3)
            throw ConfigError("at least three mooring lines are required");
        if (!(line_weight_per_length > 0.0))
            throw ConfigError("line_weight_per_length must be positive");
        if (!(anchor_radius > 0.0))
            throw ConfigError("anchor_radius must be positive");
    }

    void FarmConfig::validate() const
    {
        if (turbines.empty())
            throw ConfigError("farm has no turbines");
        if (adjacency.size() != turbines.size())
            throw ConfigError("adjacency size does not match turbine count");
        for (const auto& t : turbines)
        {
            t.spec.validate();
            t.mooring.validate();
        }
        for (std::size_t i = 0; i < adjacency.size(); ++i)
        {
            for (std::size_t j : adjacency[i])
            {
                if (j >= turbines.size())
                    throw ConfigError("adjacency index out of range");
                if (j == i)
                    throw ConfigError("turbine listed as its own neighbour");
                const auto& back = adjacency[j];
                if (std::find(back.begin(), back.end(), i) == back.end())
                    throw ConfigError("adjacency is not symmetric");
            }
        }
    }

    FarmConfig make_row_farm(std::size_t n, double spacing_diameters, const TurbineSpec& spec,
                             const MooringSpec& mooring)
    {
        if (n == 0)
            throw ConfigError("row farm needs at least one turbine");
        if (!(spacing_diameters > 0.0))
            throw ConfigError("spacing must be positive");
        FarmConfig cfg;
        cfg.spacing_diameters = spacing_diameters;
        const double pitch = spacing_diameters * spec.rotor_diameter;
        for (std::size_t i = 0; i < n; ++i)
            cfg.turbines.push_back({Vec2(static_cast<double>(i) * pitch, 0.0), spec, mooring});
        cfg.adjacency = chain_adjacency(n);
        cfg.validate();
        return cfg;
    }

    double rotor_overlap_area(double y_i, double y_j, double diameter)
    {
        const double r = 0.5 * diameter;
        const double d = std::abs(y_i - y_j);
        if (d >= diameter)
            return 0.0;
        if (d == 0.0)
            return 1.0;
        const double lens = 2.0 * r * r * std::acos(d / diameter) - 0.5 * d * std::sqrt(diameter * diameter - d * d);
        return std::clamp(lens / (kPi * r * r), 0.0, 1.0);
    }

    double input_deviation_cost(const TurbineInput& u, const InputWeight& q)
    {
        const Eigen::Vector2d du(u.a - kGreedyInduction, u.yaw);
        return du.dot(q * du);
    }

    double neighborhood_cost(std::size_t i, std::span<const TurbineState> states,
                             std::span<const TurbineInput> inputs, const FarmConfig& cfg,
                             const InputWeight& q)
    {
        double cost = input_deviation_cost(inputs[i], q);
        const auto& nbrs = cfg.adjacency.at(i);
        if (nbrs.empty())
            return cost;
        const double share = 1.0 / static_cast<double>(nbrs.size());
        const double diameter = cfg.turbines[i].spec.rotor_diameter;
        for (std::size_t j : nbrs)
            cost += share * rotor_overlap_area(states[i].y, states[j].y, diameter) + input_deviation_cost(inputs[j], q);
        return cost;
    }

    std::string farm_config_to_json(const FarmConfig& cfg)
    {
        json j;
        j["spacing_diameters"] = cfg.spacing_diameters;
        const TurbineSite& first = cfg.turbines.front();
        j["spec"] = spec_to_json(first.spec);
        j["mooring"] = mooring_to_json(first.mooring);
        j["turbines"] = json::array();
        for (const auto& t : cfg.turbines)
        {
            json tj{{"neutral_x", t.neutral.x()}, {"neutral_y", t.neutral.y()}};
            if (spec_to_json(t.spec) != j["spec"])
                tj["spec"] = spec_to_json(t.spec);
            if (mooring_to_json(t.mooring) != j["mooring"])
                tj["mooring"] = mooring_to_json(t.mooring);
            j["turbines"].push_back(tj);
        }
        j["adjacency"] = cfg.adjacency;
        return j.dump(2);
    }

    FarmConfig farm_config_from_json(const std::string& text)
    {
        json j;
        try
        {
            j = json::parse(text);
        }
        catch (const json::exception& e)
        {
            throw ConfigError(std::string("farm config: ") + e.what());
        }
        FarmConfig cfg;
        cfg.spacing_diameters = j.value("spacing_diameters", 7.0);
        const TurbineSpec spec = j.contains("spec") ? spec_from_json(j["spec"]) : TurbineSpec{};
        const MooringSpec mooring = j.contains("mooring") ? mooring_from_json(j["mooring"]) : MooringSpec{};
        if (!j.contains("turbines") || !j["turbines"].is_array())
            throw ConfigError("farm config: missing turbines[]");
        for (const auto& tj : j["turbines"])
        {
            TurbineSite site;
            site.neutral = Vec2(tj.value("neutral_x", 0.0), tj.value("neutral_y", 0.0));
            site.spec = tj.contains("spec") ? spec_from_json(tj["spec"], spec) : spec;
            site.mooring = tj.contains("mooring") ? mooring_from_json(tj["mooring"], mooring) : mooring;
            cfg.turbines.push_back(site);
        }
        if (j.contains("adjacency"))
            cfg.adjacency = j["adjacency"].get<std::vector<std::vector<std::size_t>>>();
        else
            cfg.adjacency = chain_adjacency(cfg.turbines.size());
        cfg.validate();
        return cfg;
    }

    FarmConfig load_farm_config(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return farm_config_from_json(ss.str());
    }

    void save_farm_config(const FarmConfig& cfg, const std::filesystem::path& path)
    {
        std::ofstream out(path);
        if (!out)
            throw IoError("cannot write " + path.string());
        out << farm_config_to_json(cfg) << '\n';
    }
} // namespace fowf
