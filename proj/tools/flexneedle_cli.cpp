// flexneedle: planning, closed-loop insertion and EM evaluation from the command line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "flexneedle/errors.hpp"
#include "flexneedle/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace flexneedle;

namespace {

struct Globals {
    std::string scenario;
    std::uint64_t seed = 1;
    std::string out = "out";
    int threads = 1;
};

Scenario load(const Globals& g)
{
    return g.scenario.empty() ? default_scenario() : parse_scenario(g.scenario);
}

fs::path out_dir(const Globals& g)
{
    fs::path p(g.out);
    fs::create_directories(p);
    return p;
}

std::ofstream open_out(const fs::path& p)
{
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    return f;
}

void write_json(const fs::path& p, const json& j)
{
    auto f = open_out(p);
    f << j.dump(2) << '\n';
}

json weights_json(const PlanWeights& w)
{
    return {{"q_lateral", w.q_lateral},
            {"r", {w.r(0), w.r(1), w.r(2)}},
            {"gamma1", w.gamma1},
            {"gamma2", w.gamma2},
            {"dt", w.dt},
            {"tracking", {{"w_x", w.tracking.w_x}, {"w_y", w.tracking.w_y}, {"w_theta", w.tracking.w_theta}}}};
}

json insertion_json(const InsertionResult& r)
{
    return {{"ok", r.ok},
            {"failure", r.failure},
            {"seed", r.seed},
            {"target", {r.target.x(), r.target.y()}},
            {"plant_tip", {r.plant_tip.x(), r.plant_tip.y()}},
            {"model_tip", {r.model_tip.x(), r.model_tip.y()}},
            {"error_mm", r.error},
            {"open_loop_error_mm", r.open_loop_error},
            {"flips", r.flips},
            {"guide_travel_mm", r.guide_travel},
            {"peak_strain", r.peak_strain},
            {"tracker_fallbacks", r.tracker_fallbacks},
            {"feedback_rejections", r.feedback_rejections}};
}

void write_insertion(const fs::path& dir, const InsertionResult& r)
{
    auto cl = open_out(dir / "closed_loop.csv");
    write_trajectory_csv(cl, r.closed_loop, true);
    auto ol = open_out(dir / "open_loop.csv");
    write_trajectory_csv(ol, r.open_loop, false);
    write_json(dir / "summary.json", insertion_json(r));
}

Eigen::Vector2d target_from(const Scenario& s, double depth, double offset)
{
    return Eigen::Vector2d(s.sim.skin_x + depth, offset);
}

GridDataset concat(GridDataset a, const GridDataset& b)
{
    Eigen::MatrixXd truth(a.truth.rows() + b.truth.rows(), a.truth.cols());
    truth << a.truth, b.truth;
    a.truth = truth;
    a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
    a.indicators.insert(a.indicators.end(), b.indicators.begin(), b.indicators.end());
    return a;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Flexible bevel-tip needle planning, tracking and EM sensing toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--scenario", g.scenario, "Scenario YAML (built-in phantom when omitted)");
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

    double depth = 40.0, offset = 5.0;
    auto add_target = [&](CLI::App* c) {
        c->add_option("--depth", depth, "Target depth below the skin [mm]");
        c->add_option("--offset", offset, "Target lateral offset [mm]");
    };

    auto* plan_cmd = app.add_subcommand("plan", "Plan a nominal insertion");
    add_target(plan_cmd);
    std::string mode;
    plan_cmd->add_option("--mode", mode, "manipulation | steering")->check(CLI::IsMember({"manipulation", "steering"}));

    auto* track_cmd = app.add_subcommand("track", "Track a saved nominal trajectory on a perturbed plant");
    add_target(track_cmd);
    std::string nominal_path;
    track_cmd->add_option("--nominal", nominal_path, "Nominal trajectory CSV")->required()->check(CLI::ExistingFile);
    std::optional<double> lateral, mu_scale, indicator;
    std::optional<std::uint64_t> sensor_seed;
    track_cmd->add_option("--lateral-offset", lateral, "Plant initial lateral offset [mm]");
    track_cmd->add_option("--mu-scale", mu_scale, "Plant tissue stiffness factor");
    track_cmd->add_option("--indicator", indicator, "EM indicator value");
    track_cmd->add_option("--sensor-seed", sensor_seed, "Seed of the sensor and tracker streams");

    auto* run_cmd = app.add_subcommand("run", "Plan and execute one insertion");
    add_target(run_cmd);

    auto* camp_cmd = app.add_subcommand("campaign", "All targets x repetitions of the scenario");
    std::optional<int> reps;
    camp_cmd->add_option("--repetitions", reps, "Override repetitions per target")->check(CLI::PositiveNumber);

    auto* synth_cmd = app.add_subcommand("em-synth", "Synthesize an EM characterization grid");
    std::string env = "ideal";
    GridSpec grid;
    synth_cmd->add_option("--environment", env, "ideal | noisy | both")->check(CLI::IsMember({"ideal", "noisy", "both"}));
    synth_cmd->add_option("--points-per-axis", grid.points_per_axis)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--samples", grid.samples_per_point)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--extent", grid.extent, "Grid cube edge [mm]");

    auto* eval_cmd = app.add_subcommand("em-eval", "Error statistics of an EM grid dataset");
    std::string grid_path;
    double breakpoint = em_reference::kIndicatorThreshold, percentile = 95.0;
    eval_cmd->add_option("--grid", grid_path, "Grid CSV")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--breakpoint", breakpoint, "Indicator breakpoint of the piecewise fit");
    eval_cmd->add_option("--percentile", percentile, "Threshold percentile");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan_cmd) {
            Scenario s = load(g);
            if (mode == "steering") s.plan.mode = PlanMode::Steering;
            if (mode == "manipulation") s.plan.mode = PlanMode::Manipulation;
            const auto target = target_from(s, depth, offset);
            const auto nt = plan_for(s, target, g.seed, g.threads);
            const auto dir = out_dir(g);
            auto f = open_out(dir / "nominal.csv");
            write_trajectory_csv(f, nominal_records(nt), false);
            auto h = open_out(dir / "ce_history.csv");
            write_ce_history_csv(h, nt.history);
            const Eigen::Vector3d tip = nt.tip(nt.steps());
            int flips = 0;
            double guide = 0.0;
            for (const auto& u : nt.controls) flips += u.flip == kFlip, guide += std::abs(u.dg_y);
            const json meta = {{"target", {target.x(), target.y()}},
                               {"mode", nt.mode == PlanMode::Steering ? "steering" : "manipulation"},
                               {"seed", g.seed},
                               {"steps", nt.steps()},
                               {"iterations", nt.history.size()},
                               {"samples", s.plan.ce.sample_count},
                               {"weights", weights_json(s.weights)},
                               {"cost",
                                {{"stage", nt.cost.stage},
                                 {"targeting", nt.cost.targeting},
                                 {"strain", nt.cost.strain},
                                 {"total", nt.total_cost()}}},
                               {"tip", {tip.x(), tip.y(), tip.z()}},
                               {"tip_error_mm", (tip.head<2>() - target).norm()},
                               {"flips", flips},
                               {"guide_travel_mm", guide}};
            write_json(dir / "plan.json", meta);
            std::cout << meta.dump(2) << '\n';
        } else if (*track_cmd) {
            Scenario s = load(g);
            if (lateral) s.plant.lateral_offset = *lateral;
            if (mu_scale) s.plant.mu_scale = *mu_scale;
            if (indicator) s.sensor.indicator = *indicator;
            s.validate();
            const auto target = target_from(s, depth, offset);
            std::ifstream in(nominal_path);
            const auto nt = read_nominal_csv(in, s.sim, target, s.weights);
            const auto r = run_insertion(s, nt, sensor_seed.value_or(g.seed), g.threads);
            write_insertion(out_dir(g), r);
            std::cout << insertion_json(r).dump(2) << '\n';
            if (!r.ok) return 2;
        } else if (*run_cmd) {
            const Scenario s = load(g);
            const auto target = target_from(s, depth, offset);
            const auto nt = plan_for(s, target, mix_seed(g.seed ^ 0x706c616eULL), g.threads);
            const auto r = run_insertion(s, nt, g.seed, g.threads);
            const auto dir = out_dir(g);
            auto f = open_out(dir / "nominal.csv");
            write_trajectory_csv(f, nominal_records(nt), false);
            write_insertion(dir, r);
            std::cout << insertion_json(r).dump(2) << '\n';
            if (!r.ok) return 2;
        } else if (*camp_cmd) {
            Scenario s = load(g);
            if (reps) s.repetitions = *reps;
            const auto dir = out_dir(g);
            auto snap = open_out(dir / "scenario.yaml");
            snap << scenario_to_yaml(s);
            snap.close();
            CampaignOptions o;
            o.master_seed = g.seed;
            o.threads = g.threads;
            o.out_dir = dir.string();
            o.keep_trajectories = false;
            const auto sum = run_campaign(s, o);
            std::cout << "runs " << sum.runs << "  failures " << sum.failures << "\n"
                      << "closed loop error " << sum.mean_error << " +- " << sum.sd_error << " mm\n"
                      << "open loop error   " << sum.mean_open_loop_error << " +- " << sum.sd_open_loop_error
                      << " mm\n"
                      << "closed loop better on " << 100.0 * sum.closed_better_fraction << "% of runs, "
                      << sum.total_flips << " flips\n";
        } else if (*synth_cmd) {
            const Scenario s = load(g);
            SensorModel m = s.sensor;
            m.seed = g.seed;
            GridDataset ds;
            if (env == "noisy")
                ds = synthesize_grid(m, grid, IndicatorEnvironment::noisy());
            else
                ds = synthesize_grid(m, grid, IndicatorEnvironment::ideal());
            if (env == "both") {
                m.seed = mix_seed(g.seed);
                ds = concat(std::move(ds), synthesize_grid(m, grid, IndicatorEnvironment::noisy()));
            }
            auto f = open_out(out_dir(g) / "grid.csv");
            write_grid_csv(f, ds);
            std::cout << ds.points() << " points x " << ds.samples_per_point() << " samples\n";
        } else if (*eval_cmd) {
            std::ifstream in(grid_path);
            const auto ds = read_grid_csv(in);
            const auto rep = analyze_dataset(ds, breakpoint, percentile);
            auto f = open_out(out_dir(g) / "error_report.csv");
            write_error_report_csv(f, rep);
            json j = {{"points", ds.points()},
                      {"samples_per_point", ds.samples_per_point()},
                      {"rmse_mm", rep.rmse},
                      {"jitter_mm", rep.jitter},
                      {"threshold", rep.threshold}};
            if (rep.fit)
                j["fit"] = {{"ideal_mean_mm", rep.fit->ideal_mean},
                            {"ideal_sd_mm", rep.fit->ideal_sd},
                            {"slope_mm", rep.fit->slope},
                            {"intercept_mm", rep.fit->intercept}};
            write_json(out_dir(g) / "error_report.json", j);
            std::cout << j.dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "flexneedle: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
