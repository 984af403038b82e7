#pragma once

// Closed-loop insertion experiments: a perturbed plant simulator stands in for the
// physical needle, an internal model is corrected from simulated EM readings of the
// plant tip, and the tracker and bevel controller drive both.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexneedle/scenario.hpp"

namespace flexneedle {

struct StepRecord {
    int step = 0;
    ControlInput input;
    int bvl = kBevelUp;
    Eigen::Vector3d tip = Eigen::Vector3d::Zero();
    double strain_energy = 0.0;
    std::optional<Eigen::Vector2d> measured;  ///< closed loop only
    int flip_decision = kNoFlip;
};

struct InsertionResult {
    Eigen::Vector2d target = Eigen::Vector2d::Zero();
    std::uint64_t seed = 0;
    bool ok = true;
    std::string failure;
    Eigen::Vector2d plant_tip = Eigen::Vector2d::Zero();
    Eigen::Vector2d model_tip = Eigen::Vector2d::Zero();
    double error = 0.0;  ///< |plant tip - target|
    Eigen::Vector2d open_loop_tip = Eigen::Vector2d::Zero();
    double open_loop_error = 0.0;
    int flips = 0;
    double guide_travel = 0.0;
    double peak_strain = 0.0;
    int tracker_fallbacks = 0;
    int feedback_rejections = 0;
    std::vector<StepRecord> closed_loop;  ///< plant truth per step
    std::vector<StepRecord> open_loop;
};

/// Plans on the scenario's model (seeded by `plan_seed`).
NominalTrajectory plan_for(const Scenario& scenario, const Eigen::Vector2d& target, std::uint64_t plan_seed,
                           int threads = 1);

/// Executes `nominal` in closed loop and as an open-loop replay on the plant.
InsertionResult run_insertion(const Scenario& scenario, const NominalTrajectory& nominal, std::uint64_t seed,
                              int threads = 1);

/// Plans and executes one insertion.
InsertionResult run_insertion(const Scenario& scenario, const Eigen::Vector2d& target, std::uint64_t seed,
                              int threads = 1);

/// Stateless 64-bit mixer used for all seed derivation.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t run_seed(std::uint64_t master, int target_index, int repetition);
std::uint64_t plan_seed(std::uint64_t master, int target_index);

struct CampaignRow {
    int target_index = 0;
    int repetition = 0;
    InsertionResult result;
};

struct CampaignSummary {
    std::vector<CampaignRow> rows;
    int runs = 0;
    int failures = 0;
    double mean_error = 0.0;
    double sd_error = 0.0;
    double mean_open_loop_error = 0.0;
    double sd_open_loop_error = 0.0;
    double closed_better_fraction = 0.0;
    int total_flips = 0;
};

struct CampaignOptions {
    std::uint64_t master_seed = 1;
    int threads = 1;
    std::optional<std::string> out_dir;  ///< per-run trajectories and summary files
    bool keep_trajectories = true;
};

CampaignSummary run_campaign(const Scenario& scenario, const CampaignOptions& options);

/// mean and sample sd (0 for a single value) over the successful rows.
CampaignSummary summarize(std::vector<CampaignRow> rows);

void write_trajectory_csv(std::ostream& out, const std::vector<StepRecord>& records, bool closed_loop);
void write_summary_csv(std::ostream& out, const CampaignSummary& summary);
void write_aggregate_csv(std::ostream& out, const CampaignSummary& summary);

/// Rows of the nominal plan in trajectory CSV layout.
std::vector<StepRecord> nominal_records(const NominalTrajectory& nominal);

/// Rebuilds a nominal trajectory from a trajectory CSV by replaying its controls.
NominalTrajectory read_nominal_csv(std::istream& in, const SimConfig& config, const Eigen::Vector2d& target,
                                   const PlanWeights& weights);

void write_ce_history_csv(std::ostream& out, const std::vector<CEIteration<double>>& history);

void write_grid_csv(std::ostream& out, const GridDataset& dataset);
GridDataset read_grid_csv(std::istream& in);
void write_error_report_csv(std::ostream& out, const ErrorReport& report);

}  // namespace flexneedle
