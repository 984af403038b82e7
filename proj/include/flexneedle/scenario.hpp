#pragma once

// Experiment description: simulator, targets, plant mismatch, sensor and controller
// settings. Loaded from YAML.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexneedle/bang_bang.hpp"
#include "flexneedle/em_sensor.hpp"
#include "flexneedle/needle_sim.hpp"
#include "flexneedle/planner.hpp"
#include "flexneedle/tracker.hpp"

namespace flexneedle {

/// How the closed loop chooses bevel flips.
enum class FlipPolicy { BangBang, Nominal };

struct PlantPerturbation {
    double lateral_offset = 0.0;  ///< [mm] base and guide
    double angular_offset = 0.0;  ///< [rad] base heading
    double mu_scale = 1.0;
};

struct Scenario {
    SimConfig sim;
    std::vector<Eigen::Vector2d> targets;  ///< world (x, y) [mm]
    int repetitions = 1;
    PlantPerturbation plant;
    SensorModel sensor;
    PlanWeights weights;
    PlanOptions plan;
    TrackerOptions track;
    KinematicParams<double> kinematic;
    FlipPolicy flip_policy = FlipPolicy::BangBang;

    void validate() const;
    SimConfig plant_config() const { return scale_tissue_stiffness(sim, plant.mu_scale); }
};

/// Grid of targets at skin_x + depth for every (depth, lateral offset) pair.
std::vector<Eigen::Vector2d> target_grid(double skin_x, const std::vector<double>& depths,
                                         const std::vector<double>& offsets);

/// Phantom campaign: depths 25..45 mm by 5, offsets -5/0/+5 mm, 10 repetitions.
Scenario default_scenario();

Scenario parse_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& yaml);

/// YAML text that parses back to an equivalent scenario.
std::string scenario_to_yaml(const Scenario& scenario);

/// Initial state of a simulator offset laterally and angularly about its base.
SimState perturbed_initial_state(const SimConfig& config, const PlantPerturbation& p);

}  // namespace flexneedle
