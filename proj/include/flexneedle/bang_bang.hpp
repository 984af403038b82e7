#pragma once

// Bevel-direction decision from two constant-curvature tip rollouts.
//
// The tip is propagated with the unicycle update
//     x += cos(theta) u,  y += sin(theta) u,  theta += sgn * kappa * u
// once for the current bevel direction and once for the opposite one; the bevel
// is flipped when the opposite arc ends closer to the target by more than the
// hysteresis threshold.

#include <cmath>

#include <Eigen/Dense>

#include "flexneedle/errors.hpp"

namespace flexneedle {

template <typename Scalar = double>
struct KinematicParams {
    Scalar kappa = Scalar(0.005);      ///< curvature magnitude [1/mm]
    Scalar substep = Scalar(0.5);      ///< u [mm]
    Scalar hysteresis = Scalar(0.05);  ///< h_f [mm]

    void validate() const
    {
        if (!(kappa > Scalar(0))) throw ConfigError("kinematic kappa must be > 0");
        if (!(substep > Scalar(0))) throw ConfigError("kinematic substep must be > 0");
        if (hysteresis < Scalar(0)) throw ConfigError("flip hysteresis must be >= 0");
    }
};

/// Final (x, y, theta) after advancing `total_advance` along the arc chosen by sgn.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> rollout_kinematic(const Eigen::Matrix<Scalar, 3, 1>& tip, int sgn,
                                              const KinematicParams<Scalar>& params, Scalar total_advance)
{
    using std::cos;
    using std::floor;
    using std::sin;
    if (total_advance < Scalar(0)) throw ConfigError("kinematic rollout needs a non-negative advance");
    Eigen::Matrix<Scalar, 3, 1> g = tip;
    const auto full = static_cast<long>(floor(total_advance / params.substep));
    const Scalar rest = total_advance - Scalar(full) * params.substep;
    auto advance = [&](Scalar u) {
        const Scalar th = g(2);
        g(0) += cos(th) * u;
        g(1) += sin(th) * u;
        g(2) += Scalar(sgn) * params.kappa * u;
    };
    for (long k = 0; k < full; ++k) advance(params.substep);
    if (rest > Scalar(0)) advance(rest);
    return g;
}

/// Returns +1 (toggle) or -1 (keep). Ties keep the current bevel.
template <typename Scalar>
int decide_flip(const Eigen::Matrix<Scalar, 3, 1>& tip, int bvl, const Eigen::Matrix<Scalar, 2, 1>& target,
                const KinematicParams<Scalar>& params, Scalar lookahead_advance)
{
    if (!(lookahead_advance > Scalar(0))) return -1;
    const auto keep = rollout_kinematic(tip, bvl, params, lookahead_advance);
    const auto swap = rollout_kinematic(tip, -bvl, params, lookahead_advance);
    const Scalar d_keep = (keep.template head<2>() - target).norm();
    const Scalar d_swap = (swap.template head<2>() - target).norm();
    return (d_swap < d_keep && d_keep - d_swap > params.hysteresis) ? 1 : -1;
}

}  // namespace flexneedle
