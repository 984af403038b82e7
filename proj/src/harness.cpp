#include "flexneedle/harness.hpp"

#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "flexneedle/errors.hpp"

namespace flexneedle {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

StepRecord record(const SimConfig& config, const SimState& s, int step_no, const ControlInput& u)
{
    StepRecord r;
    r.step = step_no;
    r.input = u;
    r.bvl = s.needle.bvl;
    r.tip = tip_pose(s);
    r.strain_energy = strain_energy(config, s);
    r.flip_decision = u.flip;
    return r;
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double to_double(const std::string& s, const std::string& what)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() && s.find_first_not_of(" \r", pos) != std::string::npos) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse " + what + " value '" + s + "'");
    }
}

std::map<std::string, int> header_index(const std::string& line, const std::vector<std::string>& required)
{
    std::map<std::string, int> idx;
    auto cols = split(line);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        std::string c = cols[i];
        while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
        idx[c] = static_cast<int>(i);
    }
    for (const auto& r : required)
        if (!idx.count(r)) throw ConfigError("CSV header lacks column '" + r + "'");
    return idx;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t x)
{
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t run_seed(std::uint64_t master, int target_index, int repetition)
{
    return mix_seed(mix_seed(mix_seed(master) ^ static_cast<std::uint64_t>(target_index)) ^
                    static_cast<std::uint64_t>(repetition));
}

std::uint64_t plan_seed(std::uint64_t master, int target_index)
{
    return mix_seed(mix_seed(master ^ 0x706c616eULL) ^ static_cast<std::uint64_t>(target_index));
}

NominalTrajectory plan_for(const Scenario& scenario, const Eigen::Vector2d& target, std::uint64_t seed, int threads)
{
    PlanOptions opts = scenario.plan;
    opts.ce.seed = seed;
    opts.ce.threads = threads;
    return plan(scenario.sim, target, scenario.weights, opts);
}

InsertionResult run_insertion(const Scenario& scenario, const NominalTrajectory& nominal, std::uint64_t seed,
                              int threads)
{
    InsertionResult res;
    res.target = nominal.target;
    res.seed = seed;

    const SimConfig& model_cfg = scenario.sim;
    const SimConfig plant_cfg = scenario.plant_config();
    const Eigen::Vector2d target = nominal.target;

    SensorModel sm = scenario.sensor;
    sm.seed = mix_seed(seed);
    EmSensor sensor(sm, 2);
    TrackerOptions topt = scenario.track;
    topt.ce.seed = mix_seed(seed ^ 0x747261636bULL);
    topt.ce.threads = threads;

    try {
        SimState plant = perturbed_initial_state(plant_cfg, scenario.plant);
        SimState model = new_simulation(model_cfg);
        res.closed_loop.push_back(record(plant_cfg, plant, 0, {}));

        for (int s = 0; s < nominal.steps(); ++s) {
            const Eigen::Vector2d measured = simulate_reading(sensor, tip_pose(plant).head<2>());
            try {
                model = apply_feedback(model_cfg, model, measured);
            } catch (const FeedbackError&) {
                ++res.feedback_rejections;
            }

            int flip = kNoFlip;
            if (scenario.flip_policy == FlipPolicy::Nominal) {
                flip = nominal.controls[s].flip;
            } else {
                const Eigen::Vector3d g = tip_pose(model);
                if (g.x() > model_cfg.skin_x)
                    flip = decide_flip<double>(g, model.needle.bvl, target, scenario.kinematic, target.x() - g.x());
            }

            ControlInput u;
            try {
                u = track_step(model_cfg, model, nominal, s, topt, flip).input;
            } catch (const TrackerError&) {
                ++res.tracker_fallbacks;
                u = nominal.controls[s];
            }
            u.flip = flip;

            plant = step(plant_cfg, plant, u);
            model = step(model_cfg, model, u);

            StepRecord r = record(plant_cfg, plant, s + 1, u);
            r.measured = measured;
            res.closed_loop.push_back(r);
            res.flips += u.flip == kFlip;
            res.guide_travel += std::abs(u.dg_y);
            res.peak_strain = std::max(res.peak_strain, r.strain_energy);
        }
        res.plant_tip = tip_pose(plant).head<2>();
        res.model_tip = tip_pose(model).head<2>();
        res.error = (res.plant_tip - target).norm();

        SimState open = perturbed_initial_state(plant_cfg, scenario.plant);
        res.open_loop.push_back(record(plant_cfg, open, 0, {}));
        for (int s = 0; s < nominal.steps(); ++s) {
            open = step(plant_cfg, open, nominal.controls[s]);
            res.open_loop.push_back(record(plant_cfg, open, s + 1, nominal.controls[s]));
        }
        res.open_loop_tip = tip_pose(open).head<2>();
        res.open_loop_error = (res.open_loop_tip - target).norm();
    } catch (const std::exception& e) {
        res.ok = false;
        res.failure = e.what();
    }
    return res;
}

InsertionResult run_insertion(const Scenario& scenario, const Eigen::Vector2d& target, std::uint64_t seed, int threads)
{
    const NominalTrajectory nominal = plan_for(scenario, target, mix_seed(seed ^ 0x706c616eULL), threads);
    return run_insertion(scenario, nominal, seed, threads);
}

CampaignSummary summarize(std::vector<CampaignRow> rows)
{
    CampaignSummary s;
    s.rows = std::move(rows);
    s.runs = static_cast<int>(s.rows.size());
    std::vector<double> cl, ol;
    int better = 0;
    for (const auto& r : s.rows) {
        if (!r.result.ok) {
            ++s.failures;
            continue;
        }
        cl.push_back(r.result.error);
        ol.push_back(r.result.open_loop_error);
        better += r.result.error < r.result.open_loop_error;
        s.total_flips += r.result.flips;
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = sd = 0.0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() < 2) return;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    };
    stats(cl, s.mean_error, s.sd_error);
    stats(ol, s.mean_open_loop_error, s.sd_open_loop_error);
    s.closed_better_fraction = s.runs > 0 ? static_cast<double>(better) / s.runs : 0.0;
    return s;
}

CampaignSummary run_campaign(const Scenario& scenario, const CampaignOptions& options)
{
    scenario.validate();
    const int nt = static_cast<int>(scenario.targets.size());
    const int reps = scenario.repetitions;

    // One plan per target, shared by its repetitions. A failed plan fails its runs.
    std::vector<std::optional<NominalTrajectory>> plans(nt);
    std::vector<std::string> plan_errors(nt);
    parallel_for(nt, options.threads, [&](int t) {
        try {
            plans[t] = plan_for(scenario, scenario.targets[t], plan_seed(options.master_seed, t), 1);
        } catch (const std::exception& e) {
            plan_errors[t] = e.what();
        }
    });

    std::vector<CampaignRow> rows(static_cast<std::size_t>(nt) * reps);
    parallel_for(nt * reps, options.threads, [&](int i) {
        const int t = i / reps, r = i % reps;
        CampaignRow& row = rows[i];
        row.target_index = t;
        row.repetition = r;
        const std::uint64_t seed = run_seed(options.master_seed, t, r);
        if (!plans[t]) {
            row.result.target = scenario.targets[t];
            row.result.seed = seed;
            row.result.ok = false;
            row.result.failure = "planning failed: " + plan_errors[t];
            return;
        }
        row.result = run_insertion(scenario, *plans[t], seed, 1);
        if (!options.keep_trajectories && !options.out_dir) {
            row.result.closed_loop.clear();
            row.result.open_loop.clear();
        }
    });

    CampaignSummary summary = summarize(std::move(rows));

    if (options.out_dir) {
        namespace fs = std::filesystem;
        const fs::path dir(*options.out_dir);
        fs::create_directories(dir / "runs");
        for (int t = 0; t < nt; ++t) {
            if (!plans[t]) continue;
            std::ofstream f(dir / "runs" / ("target" + std::to_string(t) + "_nominal.csv"));
            write_trajectory_csv(f, nominal_records(*plans[t]), false);
        }
        for (auto& row : summary.rows) {
            const std::string stem = "target" + std::to_string(row.target_index) + "_rep" + std::to_string(row.repetition);
            std::ofstream cl(dir / "runs" / (stem + "_closed.csv"));
            write_trajectory_csv(cl, row.result.closed_loop, true);
            std::ofstream ol(dir / "runs" / (stem + "_open.csv"));
            write_trajectory_csv(ol, row.result.open_loop, false);
            if (!options.keep_trajectories) {
                row.result.closed_loop.clear();
                row.result.open_loop.clear();
            }
        }
        std::ofstream s(dir / "summary.csv");
        write_summary_csv(s, summary);
        std::ofstream a(dir / "aggregate.csv");
        write_aggregate_csv(a, summary);
    }
    return summary;
}

void write_trajectory_csv(std::ostream& out, const std::vector<StepRecord>& records, bool closed_loop)
{
    out << "step,db_x,dg_y,flip,bvl,tip_x,tip_y,tip_theta,strain_energy";
    if (closed_loop) out << ",measured_x,measured_y,flip_decision";
    out << '\n';
    for (const auto& r : records) {
        out << r.step << ',' << fmt(r.input.db_x) << ',' << fmt(r.input.dg_y) << ',' << r.input.flip << ',' << r.bvl
            << ',' << fmt(r.tip.x()) << ',' << fmt(r.tip.y()) << ',' << fmt(r.tip.z()) << ',' << fmt(r.strain_energy);
        if (closed_loop) {
            if (r.measured)
                out << ',' << fmt(r.measured->x()) << ',' << fmt(r.measured->y());
            else
                out << ",,";
            out << ',' << r.flip_decision;
        }
        out << '\n';
    }
}

void write_summary_csv(std::ostream& out, const CampaignSummary& summary)
{
    out << "target_index,repetition,seed,target_x,target_y,status,tip_x,tip_y,error,open_loop_error,flips,"
           "guide_travel,peak_strain,tracker_fallbacks,feedback_rejections\n";
    for (const auto& row : summary.rows) {
        const auto& r = row.result;
        out << row.target_index << ',' << row.repetition << ',' << r.seed << ',' << fmt(r.target.x()) << ','
            << fmt(r.target.y()) << ',' << (r.ok ? "ok" : "failed") << ',' << fmt(r.plant_tip.x()) << ','
            << fmt(r.plant_tip.y()) << ',' << fmt(r.error) << ',' << fmt(r.open_loop_error) << ',' << r.flips << ','
            << fmt(r.guide_travel) << ',' << fmt(r.peak_strain) << ',' << r.tracker_fallbacks << ','
            << r.feedback_rejections << '\n';
    }
}

void write_aggregate_csv(std::ostream& out, const CampaignSummary& s)
{
    out << "runs,failures,mean_error,sd_error,mean_open_loop_error,sd_open_loop_error,closed_better_fraction,"
           "total_flips\n";
    out << s.runs << ',' << s.failures << ',' << fmt(s.mean_error) << ',' << fmt(s.sd_error) << ','
        << fmt(s.mean_open_loop_error) << ',' << fmt(s.sd_open_loop_error) << ',' << fmt(s.closed_better_fraction)
        << ',' << s.total_flips << '\n';
}

std::vector<StepRecord> nominal_records(const NominalTrajectory& nominal)
{
    std::vector<StepRecord> out;
    out.push_back(record(nominal.config, nominal.states.front(), 0, {}));
    for (int s = 0; s < nominal.steps(); ++s)
        out.push_back(record(nominal.config, nominal.states[s + 1], s + 1, nominal.controls[s]));
    return out;
}

NominalTrajectory read_nominal_csv(std::istream& in, const SimConfig& config, const Eigen::Vector2d& target,
                                   const PlanWeights& weights)
{
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("nominal trajectory CSV is empty");
    const auto idx = header_index(line, {"step", "db_x", "dg_y", "flip"});
    std::vector<double> z;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() < 4) throw ConfigError("nominal trajectory CSV row is too short");
        if (to_double(cells[idx.at("step")], "step") == 0.0) continue;
        z.push_back(to_double(cells[idx.at("db_x")], "db_x"));
        z.push_back(to_double(cells[idx.at("dg_y")], "dg_y"));
        z.push_back(to_double(cells[idx.at("flip")], "flip") > 0 ? 1.0 : -1.0);
    }
    if (z.empty()) throw ConfigError("nominal trajectory CSV has no control rows");

    NominalTrajectory nt;
    nt.config = config;
    nt.target = target;
    nt.primitive = Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    RolloutResult r = rollout_primitive(config, new_simulation(config), nt.primitive, target, weights);
    if (!r.feasible) throw PlanningError("nominal trajectory does not replay on this configuration");
    nt.controls = std::move(r.controls);
    nt.states = std::move(r.states);
    nt.cost = r.cost;
    return nt;
}

void write_ce_history_csv(std::ostream& out, const std::vector<CEIteration<double>>& history)
{
    out << "iteration,gamma,best_cost,elite_count";
    const Eigen::Index dim = history.empty() ? 0 : history.front().mean.size();
    for (Eigen::Index d = 0; d < dim; ++d) out << ",mean_" << d;
    out << '\n';
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& h = history[i];
        out << i << ',' << fmt(h.gamma) << ',' << fmt(h.best_cost) << ',' << h.elite_count;
        for (Eigen::Index d = 0; d < h.mean.size(); ++d) out << ',' << fmt(h.mean(d));
        out << '\n';
    }
}

void write_grid_csv(std::ostream& out, const GridDataset& ds)
{
    ds.validate();
    out << "point_id,true_x,true_y,true_z,meas_x,meas_y,meas_z,indicator\n";
    for (int i = 0; i < ds.points(); ++i) {
        for (int j = 0; j < ds.samples_per_point(); ++j) {
            out << i;
            for (int d = 0; d < 3; ++d) out << ',' << fmt(d < ds.dims() ? ds.truth(i, d) : 0.0);
            for (int d = 0; d < 3; ++d) out << ',' << fmt(d < ds.dims() ? ds.samples[i](j, d) : 0.0);
            out << ',' << fmt(ds.indicators[i](j)) << '\n';
        }
    }
}

GridDataset read_grid_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("grid CSV is empty");
    const std::vector<std::string> cols{"point_id", "true_x", "true_y", "true_z", "meas_x", "meas_y", "meas_z", "indicator"};
    const auto idx = header_index(line, cols);

    std::map<long, std::vector<std::array<double, 7>>> points;  // ordered by id
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() < cols.size()) throw ConfigError("grid CSV row " + std::to_string(row) + " is too short");
        const long id = static_cast<long>(to_double(cells[idx.at("point_id")], "point_id"));
        std::array<double, 7> v{};
        for (int k = 0; k < 7; ++k) v[k] = to_double(cells[idx.at(cols[k + 1])], cols[k + 1]);
        points[id].push_back(v);
    }
    if (points.empty()) throw ConfigError("grid CSV has no samples");

    GridDataset ds;
    ds.truth.resize(static_cast<Eigen::Index>(points.size()), 3);
    int i = 0;
    for (const auto& [id, samples] : points) {
        const auto& first = samples.front();
        ds.truth.row(i) << first[0], first[1], first[2];
        Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), 3);
        Eigen::VectorXd ind(static_cast<Eigen::Index>(samples.size()));
        for (std::size_t j = 0; j < samples.size(); ++j) {
            m.row(j) << samples[j][3], samples[j][4], samples[j][5];
            ind(j) = samples[j][6];
        }
        ds.samples.push_back(std::move(m));
        ds.indicators.push_back(std::move(ind));
        ++i;
    }
    ds.validate();
    return ds;
}

void write_error_report_csv(std::ostream& out, const ErrorReport& report)
{
    out << "point_id,indicator,error\n";
    for (std::size_t i = 0; i < report.point_errors.size(); ++i)
        out << i << ',' << fmt(report.point_indicators[i]) << ',' << fmt(report.point_errors[i]) << '\n';
}

}  // namespace flexneedle
