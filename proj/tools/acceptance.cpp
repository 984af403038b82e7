// Acceptance run: evaluates the eight benchmark criteria and prints one PASS/FAIL
// line per criterion. The process exits non-zero only if a criterion could not be
// evaluated at all; a failed criterion is a reported result, not a crash.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flexneedle/harness.hpp"
#include "flexneedle/ogden.hpp"

using namespace flexneedle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int threads()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

// 1. cantilever against P L^3 / 3EI, and mesh doubling
Outcome beam()
{
    Stopwatch t;
    auto c = phantom_config();
    c.guide_enabled = false;
    const double L = c.needle_length(), EI = c.section().bending_rigidity;
    double worst = 0.0, worst_mesh = 0.0;
    auto fine = c;
    fine.n_nodes = 2 * (c.n_nodes - 1) + 1;
    fine.element_length = c.element_length / 2;
    for (double P : {1e-4, 5e-4, 1e-3, 2e-3, 4e-3}) {
        const double expected = P * L * L * L / (3 * EI);
        if (expected >= 0.05 * L) continue;
        EquilibriumOptions o;
        o.tip_load = {0.0, P};
        const double y = tip_pose(solve_equilibrium(c, new_simulation(c), o)).y();
        const double yf = tip_pose(solve_equilibrium(fine, new_simulation(fine), o)).y();
        worst = std::max(worst, std::abs(y - expected) / expected);
        worst_mesh = std::max(worst_mesh, std::abs(yf - y) / std::abs(y));
    }
    const double s = t.seconds();
    return {worst < 0.01 && worst_mesh < 0.02 && s < 1.0,
            fmt("max rel. error %.2e (< 1e-2), mesh doubling %.2e (< 2e-2), %.3f s (< 1 s)", worst, worst_mesh, s)};
}

// 2. CE on a 5-D quadratic
Outcome ce_convergence()
{
    Stopwatch t;
    Eigen::VectorXd center(5);
    center << 1.5, -2.0, 0.25, 3.0, -0.75;
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CEParams p;
        p.sample_count = 100;
        p.elite_fraction = 0.1;
        p.max_iterations = 50;
        p.seed = seed;
        const auto r = optimize<double>([&](const Eigen::VectorXd& z) { return (z - center).squaredNorm(); },
                                        CEDistribution<double>::isotropic(Eigen::VectorXd::Zero(5), 4.0), p);
        hits += r.history.size() <= 50 && (r.distribution.mean - center).norm() < 1e-3;
    }
    const double s = t.seconds();
    return {hits >= 9 && s < 5.0, fmt("%d/10 seeds within 1e-3 (>= 9), %.3f s (< 5 s)", hits, s)};
}

// 3. Ogden identities
Outcome ogden()
{
    Stopwatch t;
    double zero = 0.0;
    for (double mu : {1820.0, 3630.0, 1e5})
        for (double alpha : {-4.0, 2.0, 8.74, 20.0}) zero = std::max(zero, std::abs(ogden_energy_density(1.0, mu, alpha)));

    auto c = phantom_config();
    SimState s = new_simulation(c);
    s.needle.nodes.col(0).array() += 60.0;
    double worst = 0.0;
    for (int layer = 0; layer < 2; ++layer) {
        ContactPoint cp;
        cp.station_x = layer == 0 ? 5.0 : 30.0;
        cp.layer_id = layer;
        s.contacts = {cp};
        s.contacts[0].anchor_y = 0.0;
        zero = std::max(zero, strain_energy(c, s));
        for (int k = 1; k < 50; ++k) {
            const double d = 0.5 * c.t_char * k / 50.0;
            const double h = 1e-6 * std::max(1.0, d);
            auto energy = [&](double defl) {
                SimState q = s;
                q.contacts[0].anchor_y = -defl;  // needle at y = 0
                return strain_energy(c, q);
            };
            const double dW = (energy(d + h) - energy(d - h)) / (2 * h);
            const double expected = -c.t_char * c.t_char * 1e-6 * dW;
            const double f = contact_force(cp, d, c.layers, c.t_char);
            worst = std::max(worst, std::abs(f - expected) / std::abs(expected));
        }
    }
    const double sec = t.seconds();
    return {zero == 0.0 && worst < 1e-6 && sec < 1.0,
            fmt("W(1) max %.1e (= 0), force vs central difference %.2e (< 1e-6), %.3f s (< 1 s)", zero, worst, sec)};
}

// 4. Planning benchmark, 40 mm deep with a 5 mm offset
Outcome planning(const Scenario& base)
{
    const Eigen::Vector2d target(base.sim.skin_x + 40.0, 5.0);
    int within = 0;
    double slowest = 0.0;
    std::string errs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Stopwatch t;
        PlanOptions o = base.plan;
        o.mode = PlanMode::Manipulation;
        o.ce.seed = seed;
        o.ce.threads = threads();
        const auto nt = plan(base.sim, target, base.weights, o);
        slowest = std::max(slowest, t.seconds());
        const double e = (nt.tip(nt.steps()).head<2>() - target).norm();
        within += e <= 1.0;
        errs += fmt("%s%.3f", errs.empty() ? "" : " ", e);
    }
    Stopwatch t;
    PlanOptions o = base.plan;
    o.ce.seed = 1;
    o.ce.threads = threads();
    const auto st = plan_steering(base.sim, target, base.weights, o);
    slowest = std::max(slowest, t.seconds());
    double guide = 0.0;
    for (const auto& u : st.controls) guide = std::max(guide, std::abs(u.dg_y));
    const bool ok = within >= 4 && guide == 0.0 && slowest <= 300.0 && base.plan.ce.sample_count == 64 &&
                    base.plan.ce.max_iterations <= 30;
    return {ok, fmt("%d/5 seeds <= 1 mm (errors %s mm), steering max |dg_y| %g, slowest plan %.1f s (<= 300 s)",
                    within, errs.c_str(), guide, slowest)};
}

// 7. EM statistics against a brute-force recomputation
Outcome em_pipeline()
{
    Stopwatch t;
    SensorModel m;
    m.seed = 2024;
    const GridSpec g;  // 125 points x 500 samples in 3-D
    const auto ds = synthesize_grid(m, g, IndicatorEnvironment::ideal());
    const auto rep = analyze_dataset(ds, m.indicator_threshold);

    const int N = ds.points(), M = ds.samples_per_point(), D = static_cast<int>(ds.truth.cols());
    double sq_err = 0.0, sq_jit = 0.0;
    for (int i = 0; i < N; ++i) {
        std::vector<double> mean(D, 0.0);
        for (int j = 0; j < M; ++j)
            for (int d = 0; d < D; ++d) mean[d] += ds.samples[i](j, d);
        for (int d = 0; d < D; ++d) mean[d] /= M;
        double e = 0.0;
        for (int d = 0; d < D; ++d) e += (mean[d] - ds.truth(i, d)) * (mean[d] - ds.truth(i, d));
        sq_err += e;
        for (int j = 0; j < M; ++j)
            for (int d = 0; d < D; ++d) sq_jit += (mean[d] - ds.samples[i](j, d)) * (mean[d] - ds.samples[i](j, d));
    }
    const double rmse = std::sqrt(sq_err / N), jitter = std::sqrt(sq_jit / (static_cast<double>(N) * M));
    const double d_rmse = std::abs(rmse - rep.rmse), d_jit = std::abs(jitter - rep.jitter);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ui(0.06, 1.0);
    std::normal_distribution<double> noise(0.0, 0.1), ideal(0.575, 0.211);
    std::vector<std::pair<double, double>> pairs;
    for (int k = 0; k < 50; ++k) pairs.emplace_back(0.05 * k / 50.0, ideal(rng));
    for (int k = 0; k < 500; ++k) {
        const double i = ui(rng);
        pairs.emplace_back(i, 9.591 * i + 0.051 + noise(rng));
    }
    const double slope = fit_error_indicator(pairs, em_reference::kIndicatorThreshold).slope;

    SensorModel im;
    im.seed = 99;
    EmSensor sensor(im, 3);
    const Eigen::Vector3d p(10.0, -5.0, 20.0);
    double mean_err = 0.0;
    for (int k = 0; k < 10000; ++k) {
        sensor.redraw_bias();
        mean_err += (sensor.read(p) - p).norm();
    }
    mean_err /= 10000;
    const double s = t.seconds();
    const bool ok = d_rmse <= 1e-9 && d_jit <= 1e-9 && std::abs(slope - 9.591) <= 0.05 * 9.591 &&
                    std::abs(mean_err - 0.575) <= 0.1 * 0.575 && s < 30.0;
    return {ok, fmt("rmse diff %.1e, jitter diff %.1e (<= 1e-9), fitted slope %.3f (9.591 +- 5%%), "
                    "ideal mean error %.3f mm (0.575 +- 10%%), %.1f s (< 30 s)",
                    d_rmse, d_jit, slope, mean_err, s)};
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv)
{
    const std::string scenario_path = argc > 1 ? argv[1] : "";
    const fs::path work = fs::temp_directory_path() / "flexneedle_acceptance";
    std::vector<std::pair<int, Outcome>> results;
    auto report = [&](int n, Outcome o) {
        std::printf("criterion %d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        results.emplace_back(n, std::move(o));
    };

    try {
        const Scenario scenario = scenario_path.empty() ? default_scenario() : parse_scenario(scenario_path);

        report(1, beam());
        report(2, ce_convergence());
        report(3, ogden());
        report(4, planning(scenario));

        // 5. closed-loop campaign
        Scenario camp = scenario;
        camp.plant = PlantPerturbation{0.5, 0.0, 1.1};
        camp.sensor.indicator = em_reference::kIdealIndicatorMean;
        camp.kinematic.hysteresis = 0.05;
        CampaignOptions co;
        co.master_seed = 1;
        co.threads = threads();
        co.keep_trajectories = false;
        fs::remove_all(work);
        co.out_dir = (work / "a").string();
        Stopwatch t5;
        const auto a = run_campaign(camp, co);
        const double s5 = t5.seconds();
        const bool protocol = a.runs == 150 && camp.targets.size() == 15;
        report(5, {protocol && a.failures == 0 && a.mean_error <= 1.0 && a.closed_better_fraction >= 0.9 &&
                       s5 <= 7200.0,
                   fmt("%d runs, %d failed; mean error %.3f +- %.3f mm (<= 1); closed loop better on %.1f%% (>= 90%%); "
                       "open loop %.3f +- %.3f mm; %.0f s",
                       a.runs, a.failures, a.mean_error, a.sd_error, 100.0 * a.closed_better_fraction,
                       a.mean_open_loop_error, a.sd_open_loop_error, s5)});

        // 6. bang-bang truth table and hysteresis over the campaign
        KinematicParams<double> kp;
        const Eigen::Vector3d tip = Eigen::Vector3d::Zero();
        const bool table = decide_flip<double>(tip, kBevelUp, {30, 3}, kp, 30.0) == -1 &&
                           decide_flip<double>(tip, kBevelUp, {30, -3}, kp, 30.0) == 1 &&
                           decide_flip<double>(tip, kBevelUp, {30, 0}, kp, 30.0) == -1;
        Scenario literal = camp;
        literal.kinematic.hysteresis = 0.0;
        co.out_dir = (work / "h0").string();
        const auto h0 = run_campaign(literal, co);
        report(6, {table && a.total_flips <= h0.total_flips,
                   fmt("truth table %s; flips with h_f = 0.05: %d, with h_f = 0: %d", table ? "ok" : "wrong",
                       a.total_flips, h0.total_flips)});

        report(7, em_pipeline());

        // 8. the campaign of criterion 5 again, same master seed
        co.out_dir = (work / "b").string();
        run_campaign(camp, co);
        const std::string sa = slurp(work / "a" / "summary.csv"), sb = slurp(work / "b" / "summary.csv");
        const std::string ga = slurp(work / "a" / "aggregate.csv"), gb = slurp(work / "b" / "aggregate.csv");
        report(8, {!sa.empty() && sa == sb && ga == gb,
                   fmt("summary.csv %zu bytes, %s; aggregate.csv %s", sa.size(), sa == sb ? "identical" : "differs",
                       ga == gb ? "identical" : "differs")});
        fs::remove_all(work);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }

    int passed = 0;
    for (const auto& r : results) passed += r.second.pass;
    std::printf("%d/%zu criteria passed\n", passed, results.size());
    return 0;
}
