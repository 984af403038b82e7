#pragma once

#include "flexneedle/needle_sim.hpp"

namespace fn_test {

// Phantom needle with the guide disabled: a plain cantilever clamped at the base.
inline flexneedle::SimConfig cantilever_config(int n_nodes = 41, double element_length = 3.0)
{
    auto c = flexneedle::phantom_config();
    c.n_nodes = n_nodes;
    c.element_length = element_length;
    c.guide_enabled = false;
    return c;
}

// Advances the needle straight in by `total` mm using `step_mm` increments.
inline flexneedle::SimState advance(const flexneedle::SimConfig& c, flexneedle::SimState s, double total,
                                    double step_mm = 1.0)
{
    while (total > 1e-12) {
        const double d = std::min(step_mm, total);
        s = flexneedle::step(c, s, {d, 0.0, flexneedle::kNoFlip});
        total -= d;
    }
    return s;
}

}  // namespace fn_test

#include "flexneedle/planner.hpp"

namespace fn_test {

// Nominal trajectory from fixed controls, without planning.
inline flexneedle::NominalTrajectory fixed_nominal(const flexneedle::SimConfig& c, const Eigen::Vector2d& target,
                                                   const std::vector<flexneedle::ControlInput>& controls,
                                                   const flexneedle::PlanWeights& w = {})
{
    Eigen::VectorXd z(3 * controls.size());
    for (std::size_t s = 0; s < controls.size(); ++s)
        z.segment<3>(3 * s) << controls[s].db_x, controls[s].dg_y, controls[s].flip == flexneedle::kFlip ? 1.0 : -1.0;
    const auto r = flexneedle::rollout_primitive(c, flexneedle::new_simulation(c), z, target, w);
    flexneedle::NominalTrajectory nt;
    nt.config = c;
    nt.target = target;
    nt.primitive = z;
    nt.controls = r.controls;
    nt.states = r.states;
    nt.cost = r.cost;
    return nt;
}

}  // namespace fn_test
