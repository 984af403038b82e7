#include "flexneedle/tracker.hpp"

#include <cmath>
#include <limits>

#include "flexneedle/beam_element.hpp"
#include "flexneedle/errors.hpp"

namespace flexneedle {

void TrackerOptions::validate() const
{
    if (window < 1) throw ConfigError("track.window must be >= 1");
    if (sigma_db < 0 || sigma_dg < 0) throw ConfigError("track sigmas must be >= 0");
    if (entry_theta_boost < 0 || entry_zone < 0) throw ConfigError("track entry boost and zone must be >= 0");
    if (!(dt > 0)) throw ConfigError("track.dt must be > 0");
    weight.validate();
    ce.validate();
}

double se2_deviation(const Eigen::Vector3d& g, const Eigen::Vector3d& g_ref, const SE2Weight& w)
{
    const double dx = g.x() - g_ref.x();
    const double dy = g.y() - g_ref.y();
    const double dth = wrap_angle(g.z() - g_ref.z());
    return w.w_x * dx * dx + w.w_y * dy * dy + w.w_theta * dth * dth;
}

double tracking_cost(const std::vector<Eigen::Vector3d>& rollout, const std::vector<Eigen::Vector3d>& nominal,
                     const SE2Weight& w, double dt)
{
    if (rollout.size() != nominal.size()) throw ConfigError("tracking_cost needs sequences of equal length");
    double c = 0.0;
    for (std::size_t k = 0; k < rollout.size(); ++k) c += se2_deviation(rollout[k], nominal[k], w);
    return c * dt;
}

SE2Weight effective_weight(const SimConfig& config, const Eigen::Vector3d& pose, const TrackerOptions& options)
{
    SE2Weight w = options.weight;
    if (std::abs(pose.x() - config.skin_x) <= options.entry_zone) w.w_theta *= options.entry_theta_boost;
    return w;
}

double window_cost(const SimConfig& config, const SimState& estimate, const NominalTrajectory& nominal, int s0,
                   const std::vector<ControlInput>& inputs, const TrackerOptions& options)
{
    SimState s = estimate;
    double c = 0.0;
    try {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            s = step(config, s, inputs[k]);
            const Eigen::Vector3d g = tip_pose(s);
            c += se2_deviation(g, nominal.tip(s0 + static_cast<int>(k) + 1), effective_weight(config, g, options));
        }
    } catch (const SolverError&) {
        return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
    return c * options.dt;
}

TrackStep track_step(const SimConfig& config, const SimState& estimate, const NominalTrajectory& nominal, int s0,
                     const TrackerOptions& options, int pending_flip)
{
    options.validate();
    if (s0 < 0 || s0 >= nominal.steps()) throw TrackerError("tracking window starts outside the nominal trajectory");
    const int m = std::min(options.window, nominal.steps() - s0);
    const auto& limits = config.limits;

    auto decode = [&](const Eigen::VectorXd& z) {
        std::vector<ControlInput> u(m);
        for (int k = 0; k < m; ++k) u[k] = limits.clamp({z(2 * k), z(2 * k + 1), kNoFlip});
        u.front().flip = pending_flip;
        return u;
    };

    CEDistribution<double> init;
    init.mean.resize(2 * m);
    Eigen::VectorXd var(2 * m);
    for (int k = 0; k < m; ++k) {
        init.mean(2 * k) = nominal.controls[s0 + k].db_x;
        init.mean(2 * k + 1) = nominal.controls[s0 + k].dg_y;
        var(2 * k) = options.sigma_db * options.sigma_db;
        var(2 * k + 1) = options.sigma_dg * options.sigma_dg;
    }
    init.covariance = var.asDiagonal();

    TrackStep out;
    out.window = m;
    auto objective = [&](const Eigen::VectorXd& z) {
        const double c = window_cost(config, estimate, nominal, s0, decode(z), options);
        return std::isfinite(c) ? c : kInfeasibleCost;
    };

    Eigen::VectorXd best;
    double best_cost;
    if (var.isZero()) {
        // nothing to sample: the warm start is the answer
        best = init.mean;
        best_cost = objective(best);
    } else {
        CEParams p = options.ce;
        p.seed = options.ce.seed + static_cast<std::uint64_t>(s0);
        const auto r = optimize<double>(objective, init, p);
        best = r.best_sample;
        best_cost = r.best_cost;
    }
    if (!(best_cost < kInfeasibleCost)) throw TrackerError("all tracking rollouts failed at step " + std::to_string(s0));
    out.input = decode(best).front();
    out.input.flip = kNoFlip;
    out.cost = best_cost;
    return out;
}

SimState apply_feedback(const SimConfig& config, const SimState& state, const Eigen::Vector2d& measured_tip)
{
    if (!measured_tip.allFinite()) throw FeedbackError("measurement is not finite");
    const Eigen::Vector2d tip = tip_pose(state).head<2>();
    const double correction = (measured_tip - tip).norm();
    if (correction > config.solver.feedback_max_correction)
        throw FeedbackError("measured tip is " + std::to_string(correction) + " mm from the model tip");
    if (correction == 0.0) return state;

    EquilibriumOptions opts;
    opts.tip_position = measured_tip;
    try {
        SimState c = solve_equilibrium(config, state, opts);
        // carry the stations along, then settle again under the constraint
        for (auto& cp : c.contacts) {
            const auto before = lateral_position_at(state.needle, cp.station_x);
            const auto after = lateral_position_at(c.needle, cp.station_x);
            if (before && after) cp.anchor_y += *after - *before;
        }
        c = solve_equilibrium(config, c, opts);
        c.base_x = c.needle.nodes(0, 0);
        return c;
    } catch (const SolverError& e) {
        throw FeedbackError(std::string("constrained re-solve failed: ") + e.what());
    } catch (const DomainError& e) {
        throw FeedbackError(std::string("constrained re-solve failed: ") + e.what());
    }
}

}  // namespace flexneedle
