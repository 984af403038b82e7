#include "flexneedle/planner.hpp"

#include <cmath>
#include <sstream>

#include "flexneedle/errors.hpp"

namespace flexneedle {

void SE2Weight::validate() const
{
    if (w_x < 0 || w_y < 0 || w_theta < 0) throw ConfigError("SE(2) weights must be >= 0");
}

void PlanWeights::validate() const
{
    if (q_lateral < 0) throw ConfigError("weights.q_lateral must be >= 0");
    if ((r.array() < 0).any()) throw ConfigError("weights.r entries must be >= 0");
    if (gamma1 < 0 || gamma2 < 0) throw ConfigError("weights.gamma1 and gamma2 must be >= 0");
    if (!(dt > 0)) throw ConfigError("weights.dt must be > 0");
    tracking.validate();
}

void PlanOptions::validate() const
{
    if (horizon < 0) throw ConfigError("plan.horizon must be >= 0");
    if (sigma_db < 0 || sigma_dg < 0 || sigma_eps < 0) throw ConfigError("plan sigmas must be >= 0");
    if (!(steering_stiffness_factor > 0)) throw ConfigError("plan.steering_stiffness_factor must be > 0");
    ce.validate();
}

namespace {

bool contact_gate(const SimConfig& config, const SimState& state)
{
    return tip_pose(state).x() > config.skin_x;
}

}  // namespace

double deflection_penalty(const SimState& state, const PlanWeights& w)
{
    if (w.q_lateral == 0.0) return 0.0;
    const auto& nodes = state.needle.nodes;
    const double slope = std::tan(state.base_theta);
    double s = 0.0;
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
        const double ref = state.base_y + slope * (nodes(i, 0) - state.base_x);
        const double d = nodes(i, 1) - ref;
        s += d * d;
    }
    return w.q_lateral * s;
}

double step_cost(const SimConfig& config, const SimState& state, const Eigen::Vector3d& input, const PlanWeights& w)
{
    if (!contact_gate(config, state)) return 0.0;
    const double u = input.cwiseProduct(input).dot(w.r);
    return (deflection_penalty(state, w) + u) * w.dt;
}

double step_cost(const SimConfig& config, const SimState& state, const ControlInput& input, double eps,
                 const PlanWeights& w)
{
    return step_cost(config, state, Eigen::Vector3d(input.db_x, input.dg_y, eps), w);
}

CostBreakdown final_cost_terms(const SimConfig& config, const SimState& state, const Eigen::Vector2d& target,
                               const PlanWeights& w)
{
    CostBreakdown c;
    c.targeting = w.gamma1 * (tip_pose(state).head<2>() - target).norm();
    c.strain = w.gamma2 * strain_energy(config, state);
    return c;
}

double final_cost(const SimConfig& config, const SimState& state, const Eigen::Vector2d& target, const PlanWeights& w)
{
    return final_cost_terms(config, state, target, w).total();
}

ControlInput decode_primitive(const Eigen::VectorXd& z, int s, const ActuatorLimits& limits)
{
    ControlInput u;
    u.db_x = z(3 * s);
    u.dg_y = z(3 * s + 1);
    u.flip = z(3 * s + 2) > 0.0 ? kFlip : kNoFlip;
    return limits.clamp(u);
}

RolloutResult rollout_primitive(const SimConfig& config, const SimState& initial, const Eigen::VectorXd& z,
                                const Eigen::Vector2d& target, const PlanWeights& w)
{
    if (z.size() % 3 != 0) throw ConfigError("control primitive length must be a multiple of 3");
    const int steps = static_cast<int>(z.size() / 3);
    RolloutResult r;
    r.states.reserve(steps + 1);
    r.controls.reserve(steps);
    r.states.push_back(initial);
    try {
        for (int s = 0; s < steps; ++s) {
            const ControlInput u = decode_primitive(z, s, config.limits);
            // the surrogate is penalized as sampled, the input as applied
            r.cost.stage += step_cost(config, r.states.back(), Eigen::Vector3d(u.db_x, u.dg_y, z(3 * s + 2)), w);
            r.states.push_back(step(config, r.states.back(), u));
            r.controls.push_back(u);
        }
    } catch (const SolverError&) {
        r.feasible = false;
    } catch (const DomainError&) {
        r.feasible = false;
    }
    if (!r.feasible) {
        r.cost = CostBreakdown{};
        r.cost.stage = kInfeasibleCost;
        return r;
    }
    const CostBreakdown f = final_cost_terms(config, r.states.back(), target, w);
    r.cost.targeting = f.targeting;
    r.cost.strain = f.strain;
    return r;
}

CEDistribution<double> initial_distribution(const SimConfig& config, const Eigen::Vector2d& target,
                                            const PlanOptions& options)
{
    const int steps = options.horizon + 1;
    const double tip0 = config.skin_x - config.initial_tip_to_skin;
    const double travel = target.x() - tip0;
    if (!(travel > 0)) throw PlanningError("target lies behind the initial tip");
    if (travel > steps * config.limits.db_x_max)
        throw PlanningError("target depth exceeds the insertion budget of the horizon");

    CEDistribution<double> d;
    d.mean.resize(3 * steps);
    Eigen::VectorXd var(3 * steps);
    for (int s = 0; s < steps; ++s) {
        d.mean.segment<3>(3 * s) << travel / steps, options.dg_mean, options.eps_mean;
        var.segment<3>(3 * s) << options.sigma_db * options.sigma_db, options.sigma_dg * options.sigma_dg,
            options.sigma_eps * options.sigma_eps;
    }
    d.covariance = var.asDiagonal();
    return d;
}

namespace {

NominalTrajectory run_plan(const SimConfig& config, const Eigen::Vector2d& target, const PlanWeights& weights,
                           const PlanOptions& options)
{
    config.validate();
    weights.validate();
    options.validate();
    if (!config.inside_tissue(target.x())) throw PlanningError("target must lie inside the tissue");

    const SimState initial = new_simulation(config);
    const auto init = initial_distribution(config, target, options);
    auto objective = [&](const Eigen::VectorXd& z) {
        return rollout_primitive(config, initial, z, target, weights).cost.total();
    };
    const CEResult<double> ce = optimize<double>(objective, init, options.ce);
    if (!(ce.best_cost < kInfeasibleCost)) {
        std::ostringstream msg;
        msg << "no feasible rollout in " << ce.history.size() << " CE iterations of " << options.ce.sample_count
            << " samples (target " << target.x() << ", " << target.y() << ")";
        throw PlanningError(msg.str());
    }

    // Sampling noise never fully leaves the best sample in this many dimensions, so the
    // final and initial means (both noise-free) compete with it.
    Eigen::VectorXd z = ce.best_sample;
    RolloutResult r = rollout_primitive(config, initial, z, target, weights);
    for (const Eigen::VectorXd* alt : {&ce.distribution.mean, &init.mean}) {
        RolloutResult a = rollout_primitive(config, initial, *alt, target, weights);
        if (a.feasible && a.cost.total() < r.cost.total()) {
            z = *alt;
            r = std::move(a);
        }
    }

    NominalTrajectory nt;
    nt.config = config;
    nt.target = target;
    nt.primitive = z;
    nt.history = ce.history;
    nt.mode = options.mode;
    nt.controls = std::move(r.controls);
    nt.states = std::move(r.states);
    nt.cost = r.cost;
    return nt;
}

}  // namespace

NominalTrajectory plan(const SimConfig& config, const Eigen::Vector2d& target, const PlanWeights& weights,
                       const PlanOptions& options)
{
    if (options.mode == PlanMode::Steering) return plan_steering(config, target, weights, options);
    return run_plan(config, target, weights, options);
}

NominalTrajectory plan_steering(const SimConfig& config, const Eigen::Vector2d& target, const PlanWeights& weights,
                                PlanOptions options)
{
    options.mode = PlanMode::Steering;
    SimConfig soft = config;
    soft.young_modulus *= options.steering_stiffness_factor;
    const int steps = options.horizon + 1;
    options.ce.frozen.clear();
    for (int s = 0; s < steps; ++s) options.ce.frozen.push_back(3 * s + 1);
    return run_plan(soft, target, weights, options);
}

RolloutResult replay(const NominalTrajectory& nominal, const PlanWeights& weights)
{
    return rollout_primitive(nominal.config, nominal.states.front(), nominal.primitive, nominal.target, weights);
}

}  // namespace flexneedle
