#pragma once

// Offline cross-entropy planning of a full insertion.
//
// A control primitive z stacks the per-step inputs (db_x, dg_y, eps) for steps
// 0..m; eps is a continuous surrogate decoded as flip = +1 when eps > 0. The cost
// of a primitive is the rollout cost
//     J = sum_s (X_s' Q X_s + U_s' R U_s) H(X_s) dt + gamma1 |P_tip - P_target| + gamma2 W
// where Q weighs nodal lateral deviation from the straight initial profile, H is
// one once the tip has entered tissue, and W is the tissue strain energy.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "flexneedle/ce_optimizer.hpp"
#include "flexneedle/needle_sim.hpp"

namespace flexneedle {

/// Weight of the SE(2) tracking deviation (consumed by the tracker).
struct SE2Weight {
    double w_x = 1.0;      ///< [1/mm^2]
    double w_y = 1.0;      ///< [1/mm^2]
    double w_theta = 100.0;  ///< [1/rad^2]

    void validate() const;
};

struct PlanWeights {
    double q_lateral = 1e-4;  ///< per node, on y deviation [1/mm^2]
    Eigen::Vector3d r{0.0, 1.0, 0.1};  ///< diagonal of R on (db_x, dg_y, eps)
    double gamma1 = 10.0;     ///< targeting [1/mm]
    double gamma2 = 1e-3;     ///< strain energy [1/(J/m^3)]
    double dt = 0.1;          ///< [s], notional
    SE2Weight tracking;

    void validate() const;
};

enum class PlanMode { Manipulation, Steering };

struct PlanOptions {
    int horizon = 60;  ///< m; the primitive has m + 1 steps
    PlanMode mode = PlanMode::Manipulation;
    double sigma_db = 0.3;
    double sigma_dg = 0.5;
    double sigma_eps = 1.0;
    double eps_mean = -1.0;
    double dg_mean = 0.0;
    double steering_stiffness_factor = 0.01;  ///< E multiplier in steering mode
    CEParams ce = default_ce();

    static CEParams default_ce()
    {
        CEParams p;
        p.sample_count = 64;
        p.elite_fraction = 0.1;
        p.max_iterations = 30;
        p.tolerance = 1e-4;
        return p;
    }
    void validate() const;
};

inline constexpr double kInfeasibleCost = 1e9;

struct CostBreakdown {
    double stage = 0.0;
    double targeting = 0.0;
    double strain = 0.0;
    double total() const { return stage + targeting + strain; }
};

struct NominalTrajectory {
    SimConfig config;  ///< simulator configuration the plan was made with
    Eigen::Vector2d target = Eigen::Vector2d::Zero();
    std::vector<ControlInput> controls;
    std::vector<SimState> states;  ///< controls.size() + 1
    Eigen::VectorXd primitive;
    CostBreakdown cost;
    std::vector<CEIteration<double>> history;
    PlanMode mode = PlanMode::Manipulation;

    double total_cost() const { return cost.total(); }
    Eigen::Vector3d tip(int s) const { return tip_pose(states.at(s)); }
    int steps() const { return static_cast<int>(controls.size()); }
};

/// Quadratic running cost of one step, gated on tissue contact.
double step_cost(const SimConfig& config, const SimState& state, const Eigen::Vector3d& input, const PlanWeights& w);
double step_cost(const SimConfig& config, const SimState& state, const ControlInput& input, double eps,
                 const PlanWeights& w);

double final_cost(const SimConfig& config, const SimState& state, const Eigen::Vector2d& target, const PlanWeights& w);
CostBreakdown final_cost_terms(const SimConfig& config, const SimState& state, const Eigen::Vector2d& target,
                               const PlanWeights& w);

/// Lateral deviation energy X' Q X relative to the initial straight profile.
double deflection_penalty(const SimState& state, const PlanWeights& w);

/// Decodes step s of z into a clamped control input.
ControlInput decode_primitive(const Eigen::VectorXd& z, int s, const ActuatorLimits& limits);

struct RolloutResult {
    std::vector<ControlInput> controls;
    std::vector<SimState> states;
    CostBreakdown cost;
    bool feasible = true;
};

/// Simulates z from `initial` and evaluates its cost; solver failure is reported
/// as infeasible with the penalty cost.
RolloutResult rollout_primitive(const SimConfig& config, const SimState& initial, const Eigen::VectorXd& z,
                                const Eigen::Vector2d& target, const PlanWeights& w);

/// Initial sampling distribution for a target.
CEDistribution<double> initial_distribution(const SimConfig& config, const Eigen::Vector2d& target,
                                            const PlanOptions& options);

NominalTrajectory plan(const SimConfig& config, const Eigen::Vector2d& target, const PlanWeights& weights,
                       const PlanOptions& options);

/// Kinematic-like plan: guide motion frozen at its mean, bending stiffness lowered.
NominalTrajectory plan_steering(const SimConfig& config, const Eigen::Vector2d& target, const PlanWeights& weights,
                                PlanOptions options);

/// Re-simulates the nominal controls from its first state.
RolloutResult replay(const NominalTrajectory& nominal, const PlanWeights& weights);

}  // namespace flexneedle
