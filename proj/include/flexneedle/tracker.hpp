#pragma once

// Receding-horizon CE tracking of a nominal trajectory and the tip-measurement
// feedback projection.
//
// Each control step optimizes the continuous inputs (db_x, dg_y) over a short
// window, warm-started at the nominal inputs, and executes only the first one.
// Bevel flips are never emitted here.

#include <vector>

#include <Eigen/Dense>

#include "flexneedle/ce_optimizer.hpp"
#include "flexneedle/needle_sim.hpp"
#include "flexneedle/planner.hpp"

namespace flexneedle {

struct TrackerOptions {
    int window = 5;
    double sigma_db = 0.2;
    double sigma_dg = 0.3;
    double entry_theta_boost = 10.0;  ///< w_theta multiplier near the skin
    double entry_zone = 5.0;          ///< [mm] from the skin plane
    SE2Weight weight;
    double dt = 0.1;
    CEParams ce = default_ce();

    static CEParams default_ce()
    {
        CEParams p;
        p.sample_count = 32;
        p.elite_fraction = 0.125;
        p.max_iterations = 4;
        p.tolerance = 1e-4;
        return p;
    }
    void validate() const;
};

/// w_x dx^2 + w_y dy^2 + w_theta wrap(dtheta)^2.
double se2_deviation(const Eigen::Vector3d& g, const Eigen::Vector3d& g_ref, const SE2Weight& w);

/// Sum of se2_deviation over the window, times dt.
double tracking_cost(const std::vector<Eigen::Vector3d>& rollout, const std::vector<Eigen::Vector3d>& nominal,
                     const SE2Weight& w, double dt);

/// Pose weight actually used at `pose`: w_theta boosted within the entry zone.
SE2Weight effective_weight(const SimConfig& config, const Eigen::Vector3d& pose, const TrackerOptions& options);

struct TrackStep {
    ControlInput input;
    double cost = 0.0;
    int window = 0;
};

/// Best first control of the window starting at step s0. Throws TrackerError when
/// every sampled rollout fails.
/// `pending_flip` is the bevel decision that will accompany the returned input; it
/// is applied to the first predicted step only.
TrackStep track_step(const SimConfig& config, const SimState& estimate, const NominalTrajectory& nominal, int s0,
                     const TrackerOptions& options, int pending_flip = kNoFlip);

/// Window cost of applying `inputs` (flip = keep) from `estimate`; +inf on solver failure.
double window_cost(const SimConfig& config, const SimState& estimate, const NominalTrajectory& nominal, int s0,
                   const std::vector<ControlInput>& inputs, const TrackerOptions& options);

/// Re-solves the model with the tip node held at the measurement. Contact anchors
/// move with the needle so the correction persists once the constraint is released.
/// Throws FeedbackError on divergence or when the correction exceeds the configured
/// maximum; the caller keeps its prior estimate.
SimState apply_feedback(const SimConfig& config, const SimState& state, const Eigen::Vector2d& measured_tip);

}  // namespace flexneedle
