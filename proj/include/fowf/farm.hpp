#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace fowf
{
    using Vec2 = Eigen::Vector2d;
    using InputWeight = Eigen::Matrix2d;

    inline constexpr double kPi = 3.14159265358979323846;
    inline constexpr double kGreedyInduction = 1.0 / 3.0;

    inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
    inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

    struct TurbineSpec
    {
        double rotor_diameter = 126.0; // m
        double air_density = 1.225;    // kg/m^3
        double effective_mass = 1.5e7; // kg, platform plus added mass
        double hydro_drag_coeff = 5.0e5; // kg/m, lumped quadratic drag gain

        double hub_area() const { return kPi * 0.25 * rotor_diameter * rotor_diameter; }
        void validate() const;
    };

    struct MooringSpec
    {
        double line_length = 950.0;            // m
        double water_depth = 200.0;            // m
        double line_weight_per_length = 1112.0; // N/m, submerged chain weight
        double anchor_radius = 795.0;           // m, neutral fairlead to anchor (horizontal)
        int num_lines = 3;

        void validate() const;
    };

    struct TurbineSite
    {
        Vec2 neutral = Vec2::Zero();
        TurbineSpec spec;
        MooringSpec mooring;
    };

    /// Turbine layout plus the undirected neighbour graph used by the controller.
    struct FarmConfig
    {
        std::vector<TurbineSite> turbines;
        std::vector<std::vector<std::size_t>> adjacency;
        double spacing_diameters = 7.0;

        std::size_t size() const { return turbines.size(); }
        /// Throws ConfigError on asymmetric adjacency, self-loops or bad physical constants.
        void validate() const;
    };

    /// Planar platform state: position (m) and velocity (m/s).
    struct TurbineState
    {
        double x = 0.0;
        double y = 0.0;
        double vx = 0.0;
        double vy = 0.0;

        Vec2 position() const { return {x, y}; }
        Vec2 velocity() const { return {vx, vy}; }
        bool finite() const
        {
            return std::isfinite(x) && std::isfinite(y) && std::isfinite(vx) && std::isfinite(vy);
        }
        friend bool operator==(const TurbineState&, const TurbineState&) = default;
    };

    /// Rotor inputs. Yaw is in radians, positive counter-clockwise from the x axis.
    struct TurbineInput
    {
        double a = kGreedyInduction;
        double yaw = 0.0;

        static TurbineInput greedy() { return {}; }
        friend bool operator==(const TurbineInput&, const TurbineInput&) = default;
    };

    FarmConfig make_row_farm(std::size_t n, double spacing_diameters, const TurbineSpec& spec = {},
                             const MooringSpec& mooring = {});

    /// Lens-shaped intersection of two rotor discs separated crosswind by |y_i - y_j|,
    /// normalised by the swept area. Result lies in [0, 1].
    double rotor_overlap_area(double y_i, double y_j, double diameter);

    /// du^T Q du with du measured from the greedy input (1/3, 0 rad).
    double input_deviation_cost(const TurbineInput& u, const InputWeight& q);

    /// Stage cost of turbine i's neighbourhood at one instant.
    double neighborhood_cost(std::size_t i, std::span<const TurbineState> states,
                             std::span<const TurbineInput> inputs, const FarmConfig& cfg,
                             const InputWeight& q = InputWeight::Identity());

    FarmConfig load_farm_config(const std::filesystem::path& path);
    void save_farm_config(const FarmConfig& cfg, const std::filesystem::path& path);
    std::string farm_config_to_json(const FarmConfig& cfg);
    FarmConfig farm_config_from_json(const std::string& text);
} // namespace fowf
