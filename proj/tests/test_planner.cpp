#include <doctest.h>

#include <cmath>

#include "flexneedle/errors.hpp"
#include "flexneedle/planner.hpp"
#include "test_util.hpp"

using namespace flexneedle;

namespace {

int count_flips(const NominalTrajectory& nt)
{
    int n = 0;
    for (const auto& u : nt.controls) n += u.flip == kFlip;
    return n;
}

double max_guide(const NominalTrajectory& nt)
{
    double m = 0.0;
    for (const auto& u : nt.controls) m = std::max(m, std::abs(u.dg_y));
    return m;
}

double tip_error(const NominalTrajectory& nt)
{
    return (nt.tip(nt.steps()).head<2>() - nt.target).norm();
}

PlanOptions seeded(std::uint64_t seed)
{
    PlanOptions o;
    o.ce.seed = seed;
    return o;
}

}  // namespace

TEST_CASE("step cost is gated on tissue contact")
{
    const auto c = phantom_config();
    const PlanWeights w;
    const auto s = new_simulation(c);
    CHECK(step_cost(c, s, Eigen::Vector3d(1.0, 2.0, 3.0), w) == 0.0);

    auto straight = c;
    straight.bevel_offset = 0.0;
    const auto in = fn_test::advance(straight, new_simulation(straight), 40.0);
    REQUIRE(tip_pose(in).x() > c.skin_x);
    CHECK(step_cost(straight, in, Eigen::Vector3d::Zero(), w) == doctest::Approx(0.0).scale(1e-20));
}

TEST_CASE("input penalty is quadratic")
{
    const auto c = phantom_config();
    PlanWeights w;
    w.q_lateral = 0.0;
    const auto s = fn_test::advance(c, new_simulation(c), 35.0);
    const double one = step_cost(c, s, Eigen::Vector3d(0.0, 0.4, 0.0), w);
    const double two = step_cost(c, s, Eigen::Vector3d(0.0, 0.8, 0.0), w);
    CHECK(one == doctest::Approx(0.16 * w.r(1) * w.dt));
    CHECK(two == doctest::Approx(4.0 * one));
    // insertion itself is free
    CHECK(step_cost(c, s, Eigen::Vector3d(1.0, 0.0, 0.0), w) == 0.0);
}

TEST_CASE("final cost")
{
    const auto c = phantom_config();
    PlanWeights w;
    w.gamma1 = 1.0;
    const auto s0 = new_simulation(c);
    const Eigen::Vector2d tip = tip_pose(s0).head<2>();
    CHECK(final_cost(c, s0, tip, w) == 0.0);
    CHECK(final_cost(c, s0, tip + Eigen::Vector2d(0, 1), w) == doctest::Approx(1.0));

    const auto deep = fn_test::advance(c, s0, 40.0);
    REQUIRE(strain_energy(c, deep) > 0.0);
    const Eigen::Vector2d off = tip_pose(deep).head<2>() + Eigen::Vector2d(0, 1);
    auto w0 = w;
    w0.gamma2 = 0.0;
    CHECK(final_cost(c, deep, off, w) > final_cost(c, deep, off, w0));
    CHECK(final_cost(c, deep, off, w0) == doctest::Approx(1.0));
}

TEST_CASE("decode clamps and thresholds the flip surrogate")
{
    const auto c = phantom_config();
    Eigen::VectorXd z(6);
    z << 9.0, -9.0, 0.3, -1.0, 0.2, -0.3;
    const auto a = decode_primitive(z, 0, c.limits);
    CHECK(a.db_x == c.limits.db_x_max);
    CHECK(a.dg_y == -c.limits.dg_y_max);
    CHECK(a.flip == kFlip);
    const auto b = decode_primitive(z, 1, c.limits);
    CHECK(b.db_x == 0.0);
    CHECK(b.dg_y == doctest::Approx(0.2));
    CHECK(b.flip == kNoFlip);
}

TEST_CASE("a primitive that never reaches tissue accrues no step cost")
{
    const auto c = phantom_config();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(3 * 10);
    for (int s = 0; s < 10; ++s) z.segment<3>(3 * s) << 1.0, 0.3, 0.5;
    const auto r = rollout_primitive(c, new_simulation(c), z, Eigen::Vector2d(c.skin_x + 20, 0), PlanWeights{});
    REQUIRE(r.feasible);
    CHECK(tip_pose(r.states.back()).x() < c.skin_x);
    CHECK(r.cost.stage == 0.0);
}

TEST_CASE("initial distribution spreads the insertion over the horizon")
{
    const auto c = phantom_config();
    PlanOptions o;
    o.horizon = 60;
    const Eigen::Vector2d t(c.skin_x + 40.0, 5.0);
    const auto d = initial_distribution(c, t, o);
    REQUIRE(d.mean.size() == 3 * 61);
    const double travel = t.x() - (c.skin_x - c.initial_tip_to_skin);
    CHECK(d.mean(0) == doctest::Approx(travel / 61));
    CHECK(d.mean(2) == o.eps_mean);
    CHECK(d.covariance(1, 1) == doctest::Approx(o.sigma_dg * o.sigma_dg));
    CHECK_THROWS_AS(initial_distribution(c, Eigen::Vector2d(c.skin_x - 40.0, 0), o), PlanningError);
    o.horizon = 10;
    CHECK_THROWS_AS(initial_distribution(c, Eigen::Vector2d(c.skin_x + 40.0, 0), o), PlanningError);
}

TEST_CASE("offset target: plan reaches it and replays exactly")
{
    const auto c = phantom_config();
    const PlanWeights w;
    const Eigen::Vector2d target(c.skin_x + 40.0, 5.0);
    const auto nt = plan(c, target, w, seeded(1));
    REQUIRE(nt.steps() == 61);
    REQUIRE(nt.states.size() == nt.controls.size() + 1);
    CHECK(tip_error(nt) <= 1.0);

    const auto r = replay(nt, w);
    REQUIRE(r.feasible);
    CHECK((tip_pose(r.states.back()) - nt.tip(nt.steps())).norm() <= 1e-6);

    double stage = 0.0;
    for (int s = 0; s < nt.steps(); ++s)
        stage += step_cost(c, r.states[s], nt.controls[s], nt.primitive(3 * s + 2), w);
    const double total = stage + final_cost(c, r.states.back(), target, w);
    CHECK(std::abs(total - nt.total_cost()) <= 1e-9 * std::abs(total));
}

TEST_CASE("straight target with a symmetric tip")
{
    auto c = phantom_config();
    c.bevel_offset = 0.0;
    const Eigen::Vector2d target(c.skin_x + 30.0, 0.0);
    const auto nt = plan(c, target, PlanWeights{}, seeded(2));
    CHECK(tip_error(nt) <= 0.1);
    CHECK(max_guide(nt) < 0.05);
    CHECK(count_flips(nt) == 0);
}

TEST_CASE("steering plans never move the guide")
{
    const auto c = phantom_config();
    const PlanWeights w;

    const auto off = plan_steering(c, Eigen::Vector2d(c.skin_x + 40.0, 5.0), w, seeded(3));
    CHECK(max_guide(off) == 0.0);
    CHECK(off.config.young_modulus == doctest::Approx(c.young_modulus * 0.01));
    CHECK(count_flips(off) >= 1);

    auto sym = c;
    sym.bevel_offset = 0.0;
    const auto centered = plan_steering(sym, Eigen::Vector2d(c.skin_x + 30.0, 0.0), w, seeded(4));
    CHECK(max_guide(centered) == 0.0);
    // with b = 0 a flip changes nothing, and eps^2 cannot tell eps = 0- from 0+;
    // whatever flips the plan holds must be inert
    auto no_flips = centered.controls;
    for (auto& u : no_flips) u.flip = kNoFlip;
    const auto straight = fn_test::fixed_nominal(centered.config, centered.target, no_flips);
    CHECK((straight.tip(straight.steps()) - centered.tip(centered.steps())).norm() < 1e-9);
    CHECK(tip_error(centered) <= 0.1);
}

TEST_CASE("flip-free straight insertion cannot reach a 5 mm offset")
{
    // brute force over constant insertion speeds with the bevel kept: the tip stays
    // on the side the bevel curves it toward
    const auto c = phantom_config();
    auto soft = c;
    soft.young_modulus *= 0.01;
    const Eigen::Vector2d target(c.skin_x + 40.0, 5.0);
    const double travel = target.x() - (c.skin_x - c.initial_tip_to_skin);
    double best = 1e9;
    for (double scale : {0.9, 0.95, 1.0, 1.05, 1.1}) {
        const std::vector<ControlInput> u(61, ControlInput{scale * travel / 61, 0.0, kNoFlip});
        const auto nt = fn_test::fixed_nominal(soft, target, u);
        best = std::min(best, tip_error(nt));
    }
    CHECK(best > 1.0);
}

TEST_CASE("larger targeting weight does not worsen the plan beyond the seed spread")
{
    const auto c = phantom_config();
    const Eigen::Vector2d target(c.skin_x + 25.0, 2.0);
    PlanOptions o;
    o.horizon = 30;
    o.ce.max_iterations = 12;
    PlanWeights lo, hi;
    lo.gamma1 = 2.0;
    hi.gamma1 = 20.0;
    std::vector<double> e_lo, e_hi;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        o.ce.seed = seed;
        e_lo.push_back(tip_error(plan(c, target, lo, o)));
        e_hi.push_back(tip_error(plan(c, target, hi, o)));
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / v.size();
    };
    auto spread = [&](const std::vector<double>& v) {
        const double m = mean(v);
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / (v.size() - 1));
    };
    CHECK(mean(e_hi) <= mean(e_lo) + std::max(spread(e_lo), spread(e_hi)));
}

TEST_CASE("planning rejects targets outside the tissue")
{
    const auto c = phantom_config();
    CHECK_THROWS_AS(plan(c, Eigen::Vector2d(c.skin_x - 1.0, 0.0), PlanWeights{}, PlanOptions{}), PlanningError);
}
